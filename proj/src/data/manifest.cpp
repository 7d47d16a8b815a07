#include "wscl/data/manifest.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "wscl/data/image.hpp"

namespace wscl {

using nlohmann::json;

std::map<std::string, std::size_t> DatasetManifest::counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records) ++out[std::string(to_string(r.kind))];
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw std::invalid_argument("manifest: duplicate id " + r.id);
    if (r.label != 0 && r.label != 1) throw std::invalid_argument("manifest: bad label for " + r.id);
    const bool tampered = r.label == 1;
    if (tampered == (r.kind == ManipulationKind::kNone)) {
      throw std::invalid_argument("manifest: label/kind mismatch for " + r.id);
    }
    if (tampered != r.mask_path.has_value()) {
      throw std::invalid_argument("manifest: mask presence must match label for " + r.id);
    }
  }
}

std::filesystem::path manifest_dir(const std::filesystem::path& path) {
  return std::filesystem::is_directory(path) ? path : path.parent_path();
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  m.validate();
  std::ofstream out(dir / "manifest.jsonl");
  if (!out) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& r : m.records) {
    json j{{"id", r.id},
           {"image_path", r.image_path},
           {"label", r.label},
           {"manipulation_kind", std::string(to_string(r.kind))},
           {"mask_path", r.mask_path ? json(*r.mask_path) : json(nullptr)}};
    out << j.dump() << '\n';
  }
  json meta{{"split", m.split}, {"seed", m.seed}, {"image_size", m.image_size}, {"counts", m.counts()}};
  std::ofstream mo(dir / "dataset.json");
  if (!mo) throw IoError("cannot write " + (dir / "dataset.json").string());
  mo << meta.dump(2) << '\n';
  if (!out || !mo) throw IoError("write failed in " + dir.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto dir = manifest_dir(path);
  const auto file = std::filesystem::is_directory(path) ? path / "manifest.jsonl" : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      SampleRecord r;
      r.id = j.at("id").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.kind = parse_manipulation_kind(j.at("manipulation_kind").get<std::string>());
      if (j.contains("mask_path") && !j["mask_path"].is_null()) r.mask_path = j["mask_path"].get<std::string>();
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  const auto meta_file = dir / "dataset.json";
  if (std::filesystem::exists(meta_file)) {
    std::ifstream mi(meta_file);
    try {
      const auto meta = json::parse(mi);
      m.split = meta.value("split", std::string());
      m.seed = meta.value("seed", std::uint64_t{0});
      m.image_size = meta.value("image_size", std::size_t{0});
    } catch (const std::exception& e) {
      throw IoError(meta_file.string() + ": " + e.what());
    }
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  return m;
}

}  // namespace wscl
