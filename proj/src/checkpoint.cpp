#include "infocon/checkpoint.hpp"

#include "infocon/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace infocon {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'I', 'N', 'F', 'C', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& file) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError(file.string() + ": truncated record");
  return v;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".config.json");
}

std::map<std::string, Matrix> checkpoint_arrays(const InfoConModel& model) {
  std::map<std::string, Matrix> out;
  for (const auto* p : model.store.all()) out[p->name] = p->value;
  out["codebook.alpha"] = model.codebook.alpha.value;
  out["codebook.p"] = model.codebook.p.value;
  return out;
}

void save_checkpoint(const InfoConModel& model, const CheckpointMeta& meta, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw CheckpointError(file.string() + ": cannot write");
  out.write(kMagic, sizeof(kMagic));
  for (const auto& [name, m] : checkpoint_arrays(model)) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<float>(out, static_cast<float>(m(r, c)));
  }
  if (!out) throw CheckpointError(file.string() + ": write failed");

  json side = {{"config", config_to_json(meta.config)},
               {"iteration", meta.iteration},
               {"state_dim", meta.state_dim},
               {"action_dim", meta.action_dim},
               {"dataset_id", meta.dataset_id}};
  std::ofstream s(sidecar_path(file), std::ios::binary);
  if (!s) throw CheckpointError(sidecar_path(file).string() + ": cannot write");
  s << side.dump(2) << "\n";
}

std::map<std::string, Matrix> read_checkpoint_arrays(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError(file.string() + ": cannot open");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(file.string() + ": not an INFC1 checkpoint");
  std::map<std::string, Matrix> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get<std::uint32_t>(in, file);
    if (len == 0 || len > 4096) throw CheckpointError(file.string() + ": implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError(file.string() + ": truncated name");
    const auto ndims = get<std::uint32_t>(in, file);
    if (ndims != 2) throw CheckpointError(file.string() + ": array '" + name + "' is not two-dimensional");
    const auto rows = get<std::uint64_t>(in, file);
    const auto cols = get<std::uint64_t>(in, file);
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError(file.string() + ": array '" + name + "' too large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<double>(get<float>(in, file));
    if (!out.emplace(name, std::move(m)).second) throw CheckpointError(file.string() + ": duplicate array '" + name + "'");
  }
  return out;
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& file) {
  const auto path = sidecar_path(file);
  std::ifstream in(path);
  if (!in) throw CheckpointError(path.string() + ": cannot open");
  try {
    const json j = json::parse(in);
    CheckpointMeta m;
    m.config = config_from_json(j.at("config"));
    m.iteration = j.at("iteration").get<int>();
    m.state_dim = j.at("state_dim").get<int>();
    m.action_dim = j.at("action_dim").get<int>();
    m.dataset_id = j.at("dataset_id").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::unique_ptr<InfoConModel> load_model(const std::filesystem::path& file, CheckpointMeta* meta_out) {
  const CheckpointMeta meta = read_checkpoint_meta(file);
  auto model = std::make_unique<InfoConModel>(meta.config, meta.state_dim, meta.action_dim);
  const auto arrays = read_checkpoint_arrays(file);
  auto assign = [&](const std::string& name, Matrix& dst) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError(file.string() + ": missing array '" + name + "'");
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols())
      throw CheckpointError(file.string() + ": array '" + name + "' has shape " + std::to_string(it->second.rows()) +
                            "x" + std::to_string(it->second.cols()) + ", expected " + std::to_string(dst.rows()) + "x" +
                            std::to_string(dst.cols()));
    dst = it->second;
  };
  for (auto* p : model->store.all()) assign(p->name, p->value);
  assign("codebook.alpha", model->codebook.alpha.value);
  assign("codebook.p", model->codebook.p.value);
  const std::size_t expected = model->store.all().size() + 2;
  if (arrays.size() != expected) throw CheckpointError(file.string() + ": unexpected extra arrays");
  if (meta_out) *meta_out = meta;
  return model;
}

void round_to_float(InfoConModel& model) {
  for (auto* p : model.trainable()) p->value = p->value.cast<float>().cast<double>();
}

}  // namespace infocon
