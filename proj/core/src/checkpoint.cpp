#include "vifuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vifuse {
namespace {

// Byte order is fixed little-endian; this code assumes an LE host.
static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Hasher {
public:
    void feed(const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 1099511628211ULL;
        }
    }
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 14695981039346656037ULL;
};

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_.good()) fail("cannot open " + path + " for writing");
    }
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        hash_.feed(p, n);
    }
    template <typename T>
    void pod(T v) {
        raw(&v, sizeof(T));
    }
    void str(const std::string& s) {
        pod<uint64_t>(s.size());
        raw(s.data(), s.size());
    }
    void finish() {
        const uint64_t d = hash_.digest();
        out_.write(reinterpret_cast<const char*>(&d), sizeof(d));
        out_.flush();
        if (!out_.good()) fail("checkpoint write failed");
    }

private:
    std::ofstream out_;
    Hasher hash_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in.good()) fail("cannot open checkpoint " + path);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    void raw(void* p, size_t n) {
        if (pos_ + n > body_end())
            fail("checkpoint " + path_ + " is truncated");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T pod() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    std::string str() {
        const uint64_t n = pod<uint64_t>();
        if (n > buf_.size()) fail("checkpoint " + path_ + " is corrupt");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    size_t body_end() const {
        return buf_.size() >= 8 ? buf_.size() - 8 : 0;
    }
    void verify_checksum() {
        if (buf_.size() < 8) fail("checkpoint " + path_ + " is truncated");
        Hasher h;
        h.feed(buf_.data(), body_end());
        uint64_t stored;
        std::memcpy(&stored, buf_.data() + body_end(), 8);
        if (stored != h.digest())
            fail("checkpoint " + path_ + " failed checksum verification");
    }
    bool at_body_end() const { return pos_ == body_end(); }

private:
    std::string path_;
    std::vector<char> buf_;
    size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_json) {
    Writer w(path);
    w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.pod<uint32_t>(kCheckpointVersion);
    w.str(config_json);
    w.pod<uint64_t>(params.size());
    for (const Param<float>& p : params.items()) {
        w.str(p.path);
        w.str(p.group);
        w.pod<uint32_t>(0);  // dtype: float32
        w.pod<uint32_t>(static_cast<uint32_t>(p.tensor.ndim()));
        for (int64_t d : p.tensor.shape()) w.pod<uint64_t>(static_cast<uint64_t>(d));
    }
    for (const Param<float>& p : params.items())
        w.raw(p.tensor.data(), sizeof(float) * static_cast<size_t>(p.tensor.numel()));
    w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    r.verify_checksum();

    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        fail(path + " is not a vifuse checkpoint");
    const uint32_t version = r.pod<uint32_t>();
    if (version != kCheckpointVersion)
        fail(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.config_json = r.str();
    const uint64_t count = r.pod<uint64_t>();
    ck.entries.resize(count);
    for (CheckpointEntry& e : ck.entries) {
        e.path = r.str();
        e.group = r.str();
        const uint32_t dtype = r.pod<uint32_t>();
        if (dtype != 0) fail(path + ": unsupported dtype tag " + std::to_string(dtype));
        const uint32_t ndim = r.pod<uint32_t>();
        if (ndim > 8) fail(path + ": corrupt parameter table");
        e.shape.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d)
            e.shape[d] = static_cast<int64_t>(r.pod<uint64_t>());
    }
    for (CheckpointEntry& e : ck.entries) {
        e.values.resize(static_cast<size_t>(numel(e.shape)));
        r.raw(e.values.data(), sizeof(float) * e.values.size());
    }
    if (!r.at_body_end()) fail(path + ": trailing bytes after payload");
    return ck;
}

void apply_checkpoint(const Checkpoint& ck, ParamStore<float>& params) {
    check(ck.entries.size() == params.size(),
          "checkpoint holds " + std::to_string(ck.entries.size()) +
              " parameters, model has " + std::to_string(params.size()));
    for (const CheckpointEntry& e : ck.entries) {
        Param<float>* p = params.find(e.path);
        check(p != nullptr, "checkpoint parameter \"" + e.path + "\" not found in model");
        check(p->tensor.shape() == e.shape,
              "shape mismatch for \"" + e.path + "\": checkpoint " + shape_str(e.shape) +
                  ", model " + shape_str(p->tensor.shape()));
        std::copy(e.values.begin(), e.values.end(), p->tensor.data());
    }
}

}  // namespace vifuse
