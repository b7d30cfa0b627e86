#include "fasam/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fasam/error.hpp"
#include "json.hpp"

namespace fasam {

namespace {
constexpr char kMagic[8] = {'F', 'A', 'S', 'A', 'M', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
}
}  // namespace

void Checkpoint::put(const std::string& name, Tensor t) {
  if (!params.count(name)) param_names.push_back(name);
  params[name] = std::move(t);
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw IoError("checkpoint: missing parameter " + name);
  return it->second;
}

void Checkpoint::capture(const nn::ParamList& list) {
  for (const nn::ParamRef& p : list) put(p.name, *p.value);
}

void Checkpoint::restore(const nn::ParamList& list) const {
  for (const nn::ParamRef& p : list) {
    const Tensor& t = get(p.name);
    if (t.shape != p.value->shape)
      throw IoError("checkpoint: shape mismatch for " + p.name);
    *p.value = t;
  }
}

std::vector<std::uint8_t> Checkpoint::blob_bytes(const std::string& name) const {
  const Tensor& t = get(name);
  std::vector<std::uint8_t> out(t.size() * sizeof(double));
  std::memcpy(out.data(), t.data(), out.size());
  return out;
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header;
  header["config"] = config_json;
  header["iteration"] = iteration;
  header["rng_seed"] = rng_seed;
  nlohmann::json manifest = nlohmann::json::array();
  for (const std::string& name : param_names) {
    const Tensor& t = params.at(name);
    manifest.push_back({{"name", name}, {"shape", t.shape}});
  }
  header["params"] = manifest;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, static_cast<std::uint64_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const std::string& name : param_names) {
    const Tensor& t = params.at(name);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  read_pod(in, hlen);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("checkpoint: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(hs);
  Checkpoint ckpt;
  ckpt.config_json = header.at("config").get<std::string>();
  ckpt.iteration = header.at("iteration").get<long>();
  ckpt.rng_seed = header.at("rng_seed").get<std::uint64_t>();
  for (const auto& entry : header.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    Tensor t(entry.at("shape").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated payload in " + path);
    ckpt.put(name, std::move(t));
  }
  return ckpt;
}

}  // namespace fasam
