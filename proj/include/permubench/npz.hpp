// Copyright (c) the permubench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Readers and writers for NumPy .npy (format 1.0) arrays and .npz archives
// (ZIP containers of .npy members, stored or deflated, ZIP64 extensions
// accepted).

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace permubench {

struct NpyArray {
  std::string descr;  // numpy dtype string, e.g. "|u1", "<f4"
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;  // C-order payload

  std::int64_t numel() const;
  int item_size() const;

  static NpyArray from_u8(std::vector<std::int64_t> shape,
                          std::vector<std::uint8_t> values);
  static NpyArray from_f32(std::vector<std::int64_t> shape,
                           std::span<const float> values);
  static NpyArray from_i64(std::vector<std::int64_t> shape,
                           std::span<const std::int64_t> values);

  // Integer payload widened to int64; throws FormatError for non-integer
  // dtypes.
  std::vector<std::int64_t> as_int64() const;
};

// Throws FormatError on bad magic, unsupported version, Fortran order or
// truncated payload. `label` names the array in messages.
NpyArray parse_npy(std::span<const std::uint8_t> file, const std::string& label);
std::vector<std::uint8_t> serialize_npy(const NpyArray& array);

// Members keyed by name with any ".npy" suffix removed.
std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path);
// Writes stored (uncompressed) members in key order.
void write_npz(const std::filesystem::path& path,
               const std::map<std::string, NpyArray>& arrays);

}  // namespace permubench
