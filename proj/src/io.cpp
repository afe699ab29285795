#include "podiff/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "podiff/error.hpp"

namespace podiff::io {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

constexpr char kFieldMagic[4] = {'F', 'L', 'D', '1'};
constexpr char kStackMagic[4] = {'F', 'S', 'T', '1'};
constexpr char kCheckpointMagic[4] = {'P', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, const double* p, std::size_t n) {
    out.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t& pos, const char* what) : b_(bytes), pos_(pos), what_(what) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void magic(const char (&m)[4]) {
        need(4);
        if (std::memcmp(b_.data() + pos_, m, 4) != 0) {
            throw CorruptArtifact(std::string(what_) + ": bad magic, expected " + std::string(m, 4));
        }
        pos_ += 4;
    }

    void doubles(double* out, std::size_t n) {
        if (n > (b_.size() - pos_) / sizeof(double)) need(b_.size() + 1);
        std::memcpy(out, b_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > b_.size() - pos_) throw CorruptArtifact(std::string(what_) + ": truncated data");
    }

    const std::string& b_;
    std::size_t& pos_;
    const char* what_;
};

void put_standardizer(std::string& out, const CoeffStandardizer& s) {
    put<std::uint64_t>(out, s.size());
    put_doubles(out, s.mean().data(), s.size());
    put_doubles(out, s.stddev().data(), s.size());
    put<double>(out, s.floor());
}

CoeffStandardizer get_standardizer(Reader& r) {
    const auto k = r.get<std::uint64_t>();
    if (k > (1u << 20)) throw CorruptArtifact("checkpoint: implausible standardizer size");
    Vec mean(static_cast<Eigen::Index>(k)), sd(static_cast<Eigen::Index>(k));
    r.doubles(mean.data(), k);
    r.doubles(sd.data(), k);
    const double floor = r.get<double>();
    try {
        return CoeffStandardizer(mean, sd, floor);
    } catch (const std::invalid_argument& e) {
        throw CorruptArtifact(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace

std::string encode_field(const Field2D& f) {
    std::string out(kFieldMagic, 4);
    put<std::uint32_t>(out, 2);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.ny()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.nx()));
    put<std::uint8_t>(out, f.has_mask() ? 1 : 0);
    put_doubles(out, f.values().data(), f.size());
    if (f.has_mask()) out.append(reinterpret_cast<const char*>(f.mask()->data()), f.size());
    return out;
}

Field2D decode_field(const std::string& bytes, std::size_t& pos) {
    Reader r(bytes, pos, "field file");
    r.magic(kFieldMagic);
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 2) throw CorruptArtifact("field file: expected 2 dimensions, found " + std::to_string(ndim));
    const auto ny = r.get<std::uint32_t>();
    const auto nx = r.get<std::uint32_t>();
    const auto has_mask = r.get<std::uint8_t>();
    if (has_mask > 1) throw CorruptArtifact("field file: bad mask flag");
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    if (n > r.remaining() / sizeof(double)) throw CorruptArtifact("field file: truncated data");
    std::vector<double> values(n);
    r.doubles(values.data(), n);
    std::optional<Mask> mask;
    if (has_mask) {
        const std::string m = r.bytes(n);
        mask = Mask(m.begin(), m.end());
    }
    return Field2D(nx, ny, std::move(values), std::move(mask));
}

std::string encode_stack(const std::vector<Field2D>& fields) {
    std::string out(kStackMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(fields.size()));
    for (const Field2D& f : fields) out += encode_field(f);
    return out;
}

std::vector<Field2D> decode_stack(const std::string& bytes) {
    std::size_t pos = 0;
    Reader r(bytes, pos, "stack file");
    r.magic(kStackMagic);
    const auto count = r.get<std::uint32_t>();
    std::vector<Field2D> out;
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(decode_field(bytes, pos));
    if (pos != bytes.size()) throw CorruptArtifact("stack file: trailing bytes");
    return out;
}

void write_field(const fs::path& path, const Field2D& f) { write_file_atomic(path, encode_field(f)); }

Field2D read_field(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    Field2D f = decode_field(bytes, pos);
    if (pos != bytes.size()) throw CorruptArtifact("field file: trailing bytes in " + path.string());
    return f;
}

void write_stack(const fs::path& path, const std::vector<Field2D>& fields) {
    write_file_atomic(path, encode_stack(fields));
}

std::vector<Field2D> read_stack(const fs::path& path) { return decode_stack(read_file(path)); }

std::string encode_checkpoint(const Checkpoint& ck) {
    const MlpConfig& c = ck.params.config();
    std::string out(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    for (std::size_t v : {c.latent_dim, c.hidden, c.blocks, c.embed_dim, c.timesteps}) put<std::uint64_t>(out, v);
    put<double>(out, ck.beta_start);
    put<double>(out, ck.beta_end);
    put<std::uint64_t>(out, ck.params.size());
    put_doubles(out, ck.params.data().data(), ck.params.size());
    put<std::uint8_t>(out, ck.optimizer ? 1 : 0);
    if (ck.optimizer) {
        const AdamWState& s = *ck.optimizer;
        put<std::uint64_t>(out, s.step);
        put_doubles(out, s.m.data(), s.m.size());
        put_doubles(out, s.v.data(), s.v.size());
        for (double v : {s.cfg.lr, s.cfg.beta1, s.cfg.beta2, s.cfg.eps, s.cfg.weight_decay}) put<double>(out, v);
    }
    put_standardizer(out, ck.target_standardizer);
    put_standardizer(out, ck.cond_standardizer);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.basis_ref.size()));
    out += ck.basis_ref;
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    std::size_t pos = 0;
    Reader r(bytes, pos, "checkpoint");
    r.magic(kCheckpointMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw CorruptArtifact("checkpoint: unsupported version " + std::to_string(version));
    MlpConfig cfg;
    cfg.latent_dim = r.get<std::uint64_t>();
    cfg.hidden = r.get<std::uint64_t>();
    cfg.blocks = r.get<std::uint64_t>();
    cfg.embed_dim = r.get<std::uint64_t>();
    cfg.timesteps = r.get<std::uint64_t>();
    Checkpoint ck;
    ck.beta_start = r.get<double>();
    ck.beta_end = r.get<double>();
    try {
        cfg.validate();
        if (cfg.parameter_count() > (std::size_t{1} << 32)) throw std::invalid_argument("implausible size");
        ck.params = MlpParams(cfg);
    } catch (const std::invalid_argument& e) {
        throw CorruptArtifact(std::string("checkpoint: bad architecture: ") + e.what());
    }
    const auto n = r.get<std::uint64_t>();
    if (n != ck.params.size()) throw CorruptArtifact("checkpoint: parameter count does not match architecture");
    r.doubles(ck.params.data().data(), n);
    const auto has_opt = r.get<std::uint8_t>();
    if (has_opt > 1) throw CorruptArtifact("checkpoint: bad optimizer flag");
    if (has_opt) {
        AdamWState s(AdamWConfig{}, n);
        s.step = r.get<std::uint64_t>();
        r.doubles(s.m.data(), n);
        r.doubles(s.v.data(), n);
        s.cfg.lr = r.get<double>();
        s.cfg.beta1 = r.get<double>();
        s.cfg.beta2 = r.get<double>();
        s.cfg.eps = r.get<double>();
        s.cfg.weight_decay = r.get<double>();
        ck.optimizer = std::move(s);
    }
    ck.target_standardizer = get_standardizer(r);
    ck.cond_standardizer = get_standardizer(r);
    if (ck.target_standardizer.size() != cfg.latent_dim || ck.cond_standardizer.size() != cfg.latent_dim) {
        throw CorruptArtifact("checkpoint: standardizer size does not match K");
    }
    ck.basis_ref = r.bytes(r.get<std::uint32_t>());
    if (r.remaining() != 0) throw CorruptArtifact("checkpoint: trailing bytes");
    return ck;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) { write_file_atomic(path, encode_checkpoint(ck)); }

Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

DiffusionModel to_model(const Checkpoint& ck) {
    DiffusionModel m;
    m.schedule = make_schedule(ck.params.config().timesteps, ck.beta_start, ck.beta_end);
    m.denoiser = ck.params;
    m.target_standardizer = ck.target_standardizer;
    m.cond_standardizer = ck.cond_standardizer;
    return m;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingPrerequisite("missing input file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) { row(header); }

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::invalid_argument("CsvWriter: row width does not match header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].find_first_of(",\"\n") != std::string::npos) {
            throw std::invalid_argument("CsvWriter: cell needs quoting: " + cells[i]);
        }
        if (i) text_ += ',';
        text_ += cells[i];
    }
    text_ += '\n';
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace podiff::io
