# Independent reimplementation of the few-shot sampling recipe
# (SplitMix64 seeding, xoshiro256**, partial Fisher-Yates). Prints the
# ids expected by FewShotTest.ReproducibleAndSeedDependent.
M=(1<<64)-1
def sm(state):
    state=(state+0x9e3779b97f4a7c15)&M; z=state
    z=((z^(z>>30))*0xbf58476d1ce4e5b9)&M; z=((z^(z>>27))*0x94d049bb133111eb)&M
    return state, z^(z>>31)
def fnv(t):
    h=0xcbf29ce484222325
    for c in t.encode(): h^=c; h=(h*0x100000001b3)&M
    return h
def derive(seed,name,tag):
    s,m=sm(seed); s,m=sm(m^fnv(name)); s,m=sm(m^fnv(tag)); return m
rotl=lambda x,k: ((x<<k)|(x>>(64-k)))&M
class X:
    def __init__(s,seed):
        st=seed; s.s=[]
        for _ in range(4): st,v=sm(st); s.s.append(v)
    def next(s):
        a=s.s; r=(rotl((a[1]*5)&M,7)*9)&M; t=(a[1]<<17)&M
        a[2]^=a[0]; a[3]^=a[1]; a[1]^=a[2]; a[0]^=a[3]; a[2]^=t; a[3]=rotl(a[3],45); return r
    def below(s,b):
        lim=M-(M%b)
        while True:
            d=s.next()
            if d<lim: return d%b
# labels i%2 for 40 rows, per_class 3, seed 5
rng=X(derive(5,"BreastMNIST","subset")); out=[]
for c in range(2):
    pool=[i for i in range(40) if i%2==c]
    for i in range(3):
        j=i+rng.below(len(pool)-i); pool[i],pool[j]=pool[j],pool[i]
    out+=pool[:3]
print(out)
