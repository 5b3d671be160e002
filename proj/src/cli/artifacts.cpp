#include "recall/cli/artifacts.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

#include "recall/cli/experiment.hpp"
#include "recall/core/errors.hpp"

namespace recall {

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 15];
  }
  return out;
}

std::string sha256_bytes(const char* data, std::size_t n) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data, n) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("SHA-256 computation failed");
  return hex(md, len);
}

}  // namespace

std::string sha256_text(const std::string& text) { return sha256_bytes(text.data(), text.size()); }

std::string sha256_file(const std::filesystem::path& path) { return sha256_text(read_text(path)); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::ordered_json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::ordered_json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

Tensor<double> read_matrix_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(rows + 1) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw std::runtime_error(path.string() + ":" + std::to_string(rows + 1) + ": ragged row");
    ++rows;
  }
  return Tensor<double>({rows, cols}, std::move(values));
}

nlohmann::ordered_json load_report(const std::filesystem::path& dir) {
  const auto path = dir / "report.json";
  if (std::filesystem::exists(path)) return read_json(path);
  nlohmann::ordered_json j;
  j["format_version"] = kArtifactFormatVersion;
  return j;
}

void update_report(const std::filesystem::path& dir, const std::string& key, const nlohmann::ordered_json& value) {
  auto report = load_report(dir);
  report[key] = value;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "report.json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json listing = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    nlohmann::ordered_json item;
    item["path"] = std::filesystem::relative(f, dir).generic_string();
    item["bytes"] = std::filesystem::file_size(f);
    item["sha256"] = sha256_file(f);
    listing.push_back(item);
  }
  report["files"] = listing;
  write_json(dir / "report.json", report);
}

std::filesystem::path require_artifact(const std::filesystem::path& dir, const std::string& relative,
                                       const std::string& stage) {
  const auto path = dir / relative;
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing artifact '" + relative + "' in " + dir.string() + ": it is produced by the " +
                             stage + " stage");
  return path;
}

}  // namespace recall
