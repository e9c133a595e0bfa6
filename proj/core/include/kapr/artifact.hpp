#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace kapr::artifact {

inline constexpr int kFormatVersion = 1;

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);
/// Hash of the canonical (key-sorted, compact) JSON dump.
std::string hash_json(const nlohmann::json& value);

/// Little-endian encoder for the binary payload that follows a manifest.
class ByteWriter {
 public:
  void put_u32(std::uint32_t v);
  void put_f32(float v);
  void put_f64(double v);
  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t get_u32();
  float get_f32();
  double get_f64();
  bool exhausted() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::string_view take(std::size_t n);
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct File {
  nlohmann::json manifest;
  std::string payload;
};

/// Writes `manifest` as a single JSON line, then the raw payload. The
/// manifest must carry "format"; "version" defaults to kFormatVersion.
void write(const std::filesystem::path& path, nlohmann::json manifest, std::string_view payload);

/// Reads an artifact and checks its format tag and version. Throws IoError
/// when the file cannot be opened and FormatError on any mismatch.
File read(const std::filesystem::path& path, std::string_view format,
          int version = kFormatVersion);

enum class Dtype { F32, F64 };

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd value;
};

/// Stores matrices row-major in the order given; shapes and dtype are listed
/// under manifest["arrays"].
void write_tensors(const std::filesystem::path& path, nlohmann::json manifest,
                   const std::vector<NamedMatrix>& tensors, Dtype dtype);

struct TensorFile {
  nlohmann::json manifest;
  std::vector<NamedMatrix> tensors;

  const Eigen::MatrixXd& at(std::string_view name) const;
};

TensorFile read_tensors(const std::filesystem::path& path, std::string_view format,
                        int version = kFormatVersion);

}  // namespace kapr::artifact
