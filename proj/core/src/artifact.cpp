#include "kapr/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "kapr/error.hpp"

namespace kapr::artifact {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string_view dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

}  // namespace

std::string fnv1a64_hex(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return to_hex(h);
}

std::string hash_json(const nlohmann::json& value) { return fnv1a64_hex(value.dump()); }

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::string_view ByteReader::take(std::size_t n) {
  if (bytes_.size() - pos_ < n) throw FormatError("truncated binary payload");
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::get_u32() {
  const auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double ByteReader::get_f64() {
  const auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(v);
}

void write(const std::filesystem::path& path, nlohmann::json manifest, std::string_view payload) {
  if (!manifest.contains("format")) throw FormatError("manifest without format tag");
  if (!manifest.contains("version")) manifest["version"] = kFormatVersion;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

File read(const std::filesystem::path& path, std::string_view format, int version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path.string() + ": empty file");
  File f;
  try {
    f.manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": manifest is not JSON: " + e.what());
  }
  if (!f.manifest.is_object() || f.manifest.value("format", "") != format) {
    throw FormatError(path.string() + ": expected format '" + std::string(format) + "'");
  }
  if (f.manifest.value("version", -1) != version) {
    throw FormatError(path.string() + ": unsupported version " +
                      f.manifest.value("version", nlohmann::json(-1)).dump());
  }
  f.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return f;
}

void write_tensors(const std::filesystem::path& path, nlohmann::json manifest,
                   const std::vector<NamedMatrix>& tensors, Dtype dtype) {
  ByteWriter w;
  auto arrays = nlohmann::json::array();
  for (const auto& t : tensors) {
    arrays.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        if (dtype == Dtype::F32) {
          w.put_f32(static_cast<float>(t.value(r, c)));
        } else {
          w.put_f64(t.value(r, c));
        }
      }
    }
  }
  manifest["dtype"] = dtype_name(dtype);
  manifest["arrays"] = std::move(arrays);
  write(path, std::move(manifest), w.bytes());
}

const Eigen::MatrixXd& TensorFile::at(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw FormatError("missing array '" + std::string(name) + "'");
}

TensorFile read_tensors(const std::filesystem::path& path, std::string_view format, int version) {
  File f = read(path, format, version);
  TensorFile out;
  const std::string dtype = f.manifest.value("dtype", "");
  if (dtype != "f32" && dtype != "f64") throw FormatError(path.string() + ": bad dtype");
  ByteReader r(f.payload);
  for (const auto& a : f.manifest.at("arrays")) {
    NamedMatrix m{a.at("name").get<std::string>(),
                  Eigen::MatrixXd(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>())};
    for (Eigen::Index i = 0; i < m.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.value.cols(); ++j) {
        m.value(i, j) = dtype == "f32" ? static_cast<double>(r.get_f32()) : r.get_f64();
      }
    }
    out.tensors.push_back(std::move(m));
  }
  if (!r.exhausted()) throw FormatError(path.string() + ": trailing bytes after arrays");
  out.manifest = std::move(f.manifest);
  return out;
}

}  // namespace kapr::artifact
