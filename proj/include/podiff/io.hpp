#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "podiff/denoiser.hpp"
#include "podiff/diffusion.hpp"
#include "podiff/field.hpp"

namespace podiff::io {

namespace fs = std::filesystem;

/// Field file: "FLD1", u32 ndim (= 2), u32 dims[ndim] (ny, nx), u8 has_mask,
/// f64 values row-major, then one byte per value when masked. Little-endian.
std::string encode_field(const Field2D& f);
Field2D decode_field(const std::string& bytes, std::size_t& pos);

/// Stack file: "FST1", u32 count, then count field payloads.
std::string encode_stack(const std::vector<Field2D>& fields);
std::vector<Field2D> decode_stack(const std::string& bytes);

void write_field(const fs::path& path, const Field2D& f);
Field2D read_field(const fs::path& path);
void write_stack(const fs::path& path, const std::vector<Field2D>& fields);
std::vector<Field2D> read_stack(const fs::path& path);

struct Checkpoint {
    MlpParams params;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::optional<AdamWState> optimizer;
    CoeffStandardizer target_standardizer;
    CoeffStandardizer cond_standardizer;
    std::string basis_ref;  // hash of the basis artifact the model was trained against
};

/// "PDCK", u32 version, u64 K H B E T, f64 beta range, u64 n + f64 params,
/// u8 has-optimizer [+ u64 step, f64 m[n], f64 v[n], f64 lr b1 b2 eps wd],
/// two standardizers (u64 k, f64 mean[k], f64 std[k], f64 floor), u32 len + basis ref.
std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const fs::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const fs::path& path);

DiffusionModel to_model(const Checkpoint& ck);

/// Whole-file read; throws MissingPrerequisite when absent.
std::string read_file(const fs::path& path);
/// Write to a sibling temporary file, then rename over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// CSV with a header row; cells are written as given.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<std::string>& cells);
    const std::string& text() const noexcept { return text_; }
    void save(const fs::path& path) const { write_file_atomic(path, text_); }

private:
    std::size_t width_;
    std::string text_;
};

/// Shortest round-trip decimal form of a double.
std::string fmt_double(double v);

}  // namespace podiff::io
