#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "wscl/data/image.hpp"
#include "wscl/data/record.hpp"

namespace wscl {

std::string_view to_string(ManipulationKind kind) {
  switch (kind) {
    case ManipulationKind::kNone: return "none";
    case ManipulationKind::kCopyMove: return "copy_move";
    case ManipulationKind::kSplice: return "splice";
    case ManipulationKind::kInpaint: return "inpaint";
  }
  return "none";
}

ManipulationKind parse_manipulation_kind(std::string_view name) {
  if (name == "none") return ManipulationKind::kNone;
  if (name == "copy_move") return ManipulationKind::kCopyMove;
  if (name == "splice") return ManipulationKind::kSplice;
  if (name == "inpaint") return ManipulationKind::kInpaint;
  throw std::invalid_argument("unknown manipulation kind '" + std::string(name) + "'");
}

WeakManifest load_weak_manifest(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(file)) file /= "manifest.jsonl";
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  WeakManifest m;
  m.directory = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      WeakRecord r;
      r.id = j.at("id").get<std::string>();
      r.image_path = m.directory / j.at("image_path").get<std::string>();
      r.label = j.at("label").get<int>();
      if (r.label != 0 && r.label != 1) throw std::invalid_argument("label must be 0 or 1");
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace wscl
