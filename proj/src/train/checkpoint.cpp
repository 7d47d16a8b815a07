#include "wscl/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "wscl/data/image.hpp"

namespace wscl {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'W', 'S', 'C', 'L', 'C', 'K', 'P', 'T'};

void put_le(std::string& out, std::uint64_t bits, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const bool f64 = c.config.precision == Precision::kF64;
  const int width = f64 ? 8 : 4;
  std::string data;
  json dir = json::array();
  for (const auto& t : c.tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw std::invalid_argument("checkpoint: entry " + t.name + " has inconsistent shape");
    }
    dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", data.size()}, {"count", t.values.size()}});
    for (double v : t.values) {
      if (f64) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(data, bits, 8);
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le(data, bits, 4);
      }
    }
  }
  json header{{"format_version", c.version},
              {"dtype", f64 ? "f64" : "f32"},
              {"element_bytes", width},
              {"byte_order", "little"},
              {"config", to_json(c.config)},
              {"epoch", c.epoch},
              {"rng_state", c.rng_state},
              {"best_val_auc", c.best_val_auc ? json(*c.best_val_auc) : json(nullptr)},
              {"adam_step", c.adam_step},
              {"tensors", dir}};
  const std::string h = header.dump();
  std::string out(kMagic, 8);
  put_le(out, h.size(), 8);
  out += h;
  out += data;
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = get_le(raw + 8, 8);
  if (16 + hlen > bytes.size()) throw IoError(path.string() + ": truncated header");
  Checkpoint c;
  try {
    const json h = json::parse(bytes.substr(16, hlen));
    c.version = h.at("format_version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw std::runtime_error("unsupported format version " + std::to_string(c.version));
    }
    const std::string dtype = h.at("dtype").get<std::string>();
    const int width = dtype == "f64" ? 8 : 4;
    c.config = run_config_from_json(h.at("config"));
    c.epoch = h.at("epoch").get<int>();
    c.rng_state = h.at("rng_state").get<std::string>();
    if (!h.at("best_val_auc").is_null()) c.best_val_auc = h["best_val_auc"].get<double>();
    c.adam_step = h.at("adam_step").get<std::int64_t>();
    const std::size_t base = 16 + hlen;
    for (const auto& e : h.at("tensors")) {
      CheckpointEntry t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (count != shape_numel(t.shape) || base + offset + count * width > bytes.size()) {
        throw std::runtime_error("entry " + t.name + " out of bounds");
      }
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t bits = get_le(raw + base + offset + i * width, width);
        if (width == 8) {
          std::memcpy(&t.values[i], &bits, 8);
        } else {
          const auto b32 = static_cast<std::uint32_t>(bits);
          float fv;
          std::memcpy(&fv, &b32, 4);
          t.values[i] = fv;
        }
      }
      c.tensors.push_back(std::move(t));
    }
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return c;
}

template <typename T>
void load_parameters(Detector<T>& detector, const Checkpoint& ckpt) {
  for (auto& [name, p] : detector.named_parameters()) {
    const auto* e = ckpt.find(name);
    if (!e) throw std::invalid_argument("checkpoint: missing entry " + name);
    if (e->shape != p.shape()) {
      throw std::invalid_argument("checkpoint: entry " + name + " has shape " + shape_str(e->shape) +
                                  ", expected " + shape_str(p.shape()));
    }
    auto dst = p.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->values[i]);
  }
}

template <typename T>
Detector<T> detector_from_checkpoint(const Checkpoint& ckpt) {
  Detector<T> d(ckpt.config.detector_spec(), 0);
  load_parameters(d, ckpt);
  return d;
}

template void load_parameters(Detector<float>&, const Checkpoint&);
template void load_parameters(Detector<double>&, const Checkpoint&);
template Detector<float> detector_from_checkpoint(const Checkpoint&);
template Detector<double> detector_from_checkpoint(const Checkpoint&);

}  // namespace wscl
