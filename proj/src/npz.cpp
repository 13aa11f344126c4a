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


#include "permubench/npz.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "permubench/error.hpp"

namespace permubench {

namespace {

constexpr std::uint32_t kLocalHeaderSig = 0x04034b50;
constexpr std::uint32_t kCentralHeaderSig = 0x02014b50;
constexpr std::uint32_t kEndOfCentralDirSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;

std::uint64_t read_le(std::span<const std::uint8_t> bytes, std::size_t offset,
                      int width, const std::string& what) {
  if (offset + width > bytes.size()) {
    throw FormatError(what + ": truncated archive");
  }
  std::uint64_t value = 0;
  for (int i = width - 1; i >= 0; --i) value = (value << 8) | bytes[offset + i];
  return value;
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

std::uint32_t crc_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(data.size() - done, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, data.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in,
                                      std::uint64_t expected,
                                      const std::string& name) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
    throw FormatError(name + ": inflate initialization failed");
  }
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    throw FormatError(name + ": corrupt deflate stream");
  }
  return out;
}

// Value of `key` in a numpy header dict, as raw text up to the next
// top-level comma or closing brace.
std::string header_field(const std::string& header, const std::string& key,
                         const std::string& label) {
  const auto pos = header.find("'" + key + "'");
  if (pos == std::string::npos) {
    throw FormatError(label + ": npy header lacks '" + key + "'");
  }
  auto start = header.find(':', pos);
  if (start == std::string::npos) throw FormatError(label + ": malformed npy header");
  ++start;
  int depth = 0;
  std::size_t end = start;
  for (; end < header.size(); ++end) {
    const char c = header[end];
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (depth == 0 && (c == ',' || c == '}')) break;
  }
  std::string value = header.substr(start, end - start);
  value.erase(0, value.find_first_not_of(" "));
  value.erase(value.find_last_not_of(" ") + 1);
  return value;
}

std::vector<std::int64_t> parse_shape(const std::string& text,
                                      const std::string& label) {
  if (text.size() < 2 || text.front() != '(' || text.back() != ')') {
    throw FormatError(label + ": malformed shape " + text);
  }
  std::vector<std::int64_t> shape;
  std::string token;
  for (char c : text.substr(1, text.size() - 2) + ",") {
    if (c == ',') {
      token.erase(0, token.find_first_not_of(" "));
      token.erase(token.find_last_not_of(" ") + 1);
      if (!token.empty()) {
        try {
          shape.push_back(std::stoll(token));
        } catch (const std::exception&) {
          throw FormatError(label + ": malformed shape " + text);
        }
      }
      token.clear();
    } else {
      token += c;
    }
  }
  return shape;
}

}  // namespace

std::int64_t NpyArray::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

int NpyArray::item_size() const {
  if (descr.size() < 3) throw FormatError("bad dtype " + descr);
  return std::stoi(descr.substr(2));
}

NpyArray NpyArray::from_u8(std::vector<std::int64_t> shape,
                           std::vector<std::uint8_t> values) {
  NpyArray a{"|u1", std::move(shape), std::move(values)};
  if (a.numel() != static_cast<std::int64_t>(a.bytes.size())) {
    throw FormatError("from_u8: value count does not match shape");
  }
  return a;
}

NpyArray NpyArray::from_f32(std::vector<std::int64_t> shape,
                            std::span<const float> values) {
  NpyArray a{"<f4", std::move(shape), {}};
  if (a.numel() != static_cast<std::int64_t>(values.size())) {
    throw FormatError("from_f32: value count does not match shape");
  }
  a.bytes.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    for (int k = 0; k < 4; ++k) a.bytes[i * 4 + k] = static_cast<std::uint8_t>(bits >> (8 * k));
  }
  return a;
}

NpyArray NpyArray::from_i64(std::vector<std::int64_t> shape,
                            std::span<const std::int64_t> values) {
  NpyArray a{"<i8", std::move(shape), {}};
  if (a.numel() != static_cast<std::int64_t>(values.size())) {
    throw FormatError("from_i64: value count does not match shape");
  }
  for (auto v : values) put_le(a.bytes, static_cast<std::uint64_t>(v), 8);
  return a;
}

std::vector<std::int64_t> NpyArray::as_int64() const {
  if (descr.size() < 3 || (descr[1] != 'u' && descr[1] != 'i')) {
    throw FormatError("dtype " + descr + " is not an integer type");
  }
  if (descr[0] == '>' && item_size() > 1) {
    throw FormatError("big-endian dtype " + descr + " is not supported");
  }
  const int width = item_size();
  const bool is_signed = descr[1] == 'i';
  std::vector<std::int64_t> out(numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t raw = 0;
    for (int k = width - 1; k >= 0; --k) raw = (raw << 8) | bytes[i * width + k];
    if (is_signed && width < 8 && (raw >> (8 * width - 1)) != 0) {
      raw |= ~std::uint64_t{0} << (8 * width);
    }
    out[i] = static_cast<std::int64_t>(raw);
  }
  return out;
}

NpyArray parse_npy(std::span<const std::uint8_t> file, const std::string& label) {
  static const std::uint8_t kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (file.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), file.begin())) {
    throw FormatError(label + ": not an npy array (bad magic)");
  }
  const int major = file[6];
  std::size_t header_len, header_start;
  if (major == 1) {
    header_len = read_le(file, 8, 2, label);
    header_start = 10;
  } else if (major == 2 || major == 3) {
    header_len = read_le(file, 8, 4, label);
    header_start = 12;
  } else {
    throw FormatError(label + ": unsupported npy version " + std::to_string(major));
  }
  if (header_start + header_len > file.size()) {
    throw FormatError(label + ": truncated npy header");
  }
  const std::string header(reinterpret_cast<const char*>(file.data() + header_start),
                           header_len);
  NpyArray array;
  std::string descr = header_field(header, "descr", label);
  if (descr.size() < 2 || (descr.front() != '\'' && descr.front() != '"')) {
    throw FormatError(label + ": unsupported dtype " + descr);
  }
  array.descr = descr.substr(1, descr.size() - 2);
  if (array.descr == "u1" || array.descr == "i1") array.descr = "|" + array.descr;
  if (header_field(header, "fortran_order", label) != "False") {
    throw FormatError(label + ": Fortran-ordered arrays are not supported");
  }
  array.shape = parse_shape(header_field(header, "shape", label), label);
  const std::size_t payload = static_cast<std::size_t>(array.numel()) * array.item_size();
  const std::size_t data_start = header_start + header_len;
  if (file.size() - data_start < payload) {
    throw FormatError(label + ": truncated npy payload");
  }
  array.bytes.assign(file.begin() + data_start, file.begin() + data_start + payload);
  return array;
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& array) {
  std::string shape = "(";
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    if (i > 0) shape += ", ";
    shape += std::to_string(array.shape[i]);
  }
  shape += array.shape.size() == 1 ? ",)" : ")";
  std::string header = "{'descr': '" + array.descr +
                       "', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::vector<std::uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  put_le(out, header.size(), 2);
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), array.bytes.begin(), array.bytes.end());
  return out;
}

std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> file = read_file(path);
  const std::span<const std::uint8_t> bytes(file);
  const std::string where = path.string();

  // End-of-central-directory record: last occurrence of its signature.
  if (file.size() < 22) throw FormatError(where + ": not a ZIP archive");
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = file.size() >= 22 + 65535 ? file.size() - 22 - 65535 : 0;
  for (std::size_t pos = file.size() - 22 + 1; pos-- > lowest;) {
    if (read_le(bytes, pos, 4, where) == kEndOfCentralDirSig) {
      eocd = pos;
      break;
    }
  }
  if (eocd == std::string::npos) throw FormatError(where + ": not a ZIP archive");
  std::uint64_t entries = read_le(bytes, eocd + 10, 2, where);
  std::uint64_t dir_offset = read_le(bytes, eocd + 16, 4, where);
  if ((entries == 0xFFFF || dir_offset == 0xFFFFFFFF) && eocd >= 20 &&
      read_le(bytes, eocd - 20, 4, where) == kZip64LocatorSig) {
    const std::uint64_t end64 = read_le(bytes, eocd - 20 + 8, 8, where);
    if (read_le(bytes, end64, 4, where) != kZip64EndSig) {
      throw FormatError(where + ": bad ZIP64 end record");
    }
    entries = read_le(bytes, end64 + 32, 8, where);
    dir_offset = read_le(bytes, end64 + 48, 8, where);
  }

  std::map<std::string, NpyArray> arrays;
  std::size_t pos = dir_offset;
  for (std::uint64_t e = 0; e < entries; ++e) {
    if (read_le(bytes, pos, 4, where) != kCentralHeaderSig) {
      throw FormatError(where + ": bad central directory entry");
    }
    const auto method = read_le(bytes, pos + 10, 2, where);
    const auto crc = static_cast<std::uint32_t>(read_le(bytes, pos + 16, 4, where));
    std::uint64_t compressed = read_le(bytes, pos + 20, 4, where);
    std::uint64_t size = read_le(bytes, pos + 24, 4, where);
    const auto name_len = read_le(bytes, pos + 28, 2, where);
    const auto extra_len = read_le(bytes, pos + 30, 2, where);
    const auto comment_len = read_le(bytes, pos + 32, 2, where);
    std::uint64_t local = read_le(bytes, pos + 42, 4, where);
    if (pos + 46 + name_len > file.size()) throw FormatError(where + ": truncated archive");
    std::string name(reinterpret_cast<const char*>(file.data() + pos + 46), name_len);

    // ZIP64 extended information carries whichever fields overflowed.
    std::size_t extra = pos + 46 + name_len;
    const std::size_t extra_end = extra + extra_len;
    while (extra + 4 <= extra_end) {
      const auto id = read_le(bytes, extra, 2, where);
      const auto len = read_le(bytes, extra + 2, 2, where);
      if (id == 0x0001) {
        std::size_t field = extra + 4;
        if (size == 0xFFFFFFFF) { size = read_le(bytes, field, 8, where); field += 8; }
        if (compressed == 0xFFFFFFFF) { compressed = read_le(bytes, field, 8, where); field += 8; }
        if (local == 0xFFFFFFFF) { local = read_le(bytes, field, 8, where); }
      }
      extra += 4 + len;
    }
    pos += 46 + name_len + extra_len + comment_len;

    if (read_le(bytes, local, 4, where) != kLocalHeaderSig) {
      throw FormatError(where + ": bad local header for " + name);
    }
    const std::size_t data_start = local + 30 + read_le(bytes, local + 26, 2, where) +
                                   read_le(bytes, local + 28, 2, where);
    if (data_start + compressed > file.size()) {
      throw FormatError(where + ": truncated member " + name);
    }
    const auto raw = bytes.subspan(data_start, compressed);
    std::vector<std::uint8_t> content;
    if (method == 0) {
      content.assign(raw.begin(), raw.end());
    } else if (method == 8) {
      content = inflate_raw(raw, size, name);
    } else {
      throw FormatError(where + ": member " + name + " uses unsupported compression " +
                        std::to_string(method));
    }
    if (crc_of(content) != crc) throw FormatError(where + ": CRC mismatch in " + name);
    std::string key = name;
    if (key.size() > 4 && key.ends_with(".npy")) key.resize(key.size() - 4);
    arrays.emplace(key, parse_npy(content, key));
  }
  return arrays;
}

void write_npz(const std::filesystem::path& path,
               const std::map<std::string, NpyArray>& arrays) {
  std::vector<std::uint8_t> out, directory;
  for (const auto& [key, array] : arrays) {
    const std::string name = key + ".npy";
    const std::vector<std::uint8_t> content = serialize_npy(array);
    if (content.size() >= 0xFFFFFFFFull || out.size() >= 0xFFFFFFFFull) {
      throw FormatError("write_npz: archive too large");
    }
    const std::uint32_t crc = crc_of(content);
    const std::uint64_t offset = out.size();
    put_le(out, kLocalHeaderSig, 4);
    put_le(out, 20, 2);  // version needed
    put_le(out, 0, 2);   // flags
    put_le(out, 0, 2);   // stored
    put_le(out, 0, 2);   // time
    put_le(out, 0x21, 2);  // date 1980-01-01
    put_le(out, crc, 4);
    put_le(out, content.size(), 4);
    put_le(out, content.size(), 4);
    put_le(out, name.size(), 2);
    put_le(out, 0, 2);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), content.begin(), content.end());

    put_le(directory, kCentralHeaderSig, 4);
    put_le(directory, 20, 2);  // version made by
    put_le(directory, 20, 2);
    put_le(directory, 0, 2);
    put_le(directory, 0, 2);
    put_le(directory, 0, 2);
    put_le(directory, 0x21, 2);
    put_le(directory, crc, 4);
    put_le(directory, content.size(), 4);
    put_le(directory, content.size(), 4);
    put_le(directory, name.size(), 2);
    put_le(directory, 0, 2);  // extra
    put_le(directory, 0, 2);  // comment
    put_le(directory, 0, 2);  // disk
    put_le(directory, 0, 2);  // internal attributes
    put_le(directory, 0, 4);  // external attributes
    put_le(directory, offset, 4);
    directory.insert(directory.end(), name.begin(), name.end());
  }
  const std::uint64_t dir_offset = out.size();
  out.insert(out.end(), directory.begin(), directory.end());
  put_le(out, kEndOfCentralDirSig, 4);
  put_le(out, 0, 2);
  put_le(out, 0, 2);
  put_le(out, arrays.size(), 2);
  put_le(out, arrays.size(), 2);
  put_le(out, directory.size(), 4);
  put_le(out, dir_offset, 4);
  put_le(out, 0, 2);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

}  // namespace permubench
