#include "groovesynth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& source) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::FormatError, source + ": truncated checkpoint header");
  return value;
}

}  // namespace

const Eigen::MatrixXd* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void Checkpoint::put_parameters(const std::string& prefix, const nn::ParameterSet& params) {
  for (const auto& [path, t] : params.entries()) tensors.emplace_back(prefix + path, t.value());
}

void Checkpoint::get_parameters(const std::string& prefix, nn::ParameterSet& params) const {
  for (const auto& [path, t] : params.entries()) {
    const Eigen::MatrixXd* m = find(prefix + path);
    require(m != nullptr, ErrorKind::FormatError, "checkpoint lacks tensor " + prefix + path);
    require(m->rows() == t.rows() && m->cols() == t.cols(), ErrorKind::FormatError,
            "checkpoint tensor " + prefix + path + " has the wrong shape");
    const_cast<nn::Tensor&>(t).mutable_value() = *m;
  }
}

void Checkpoint::put_optimizer(const std::string& prefix, nn::Adam& adam) {
  for (const auto& [path, m] : adam.first_moments()) tensors.emplace_back(prefix + "adam.m/" + path, m);
  for (const auto& [path, v] : adam.second_moments()) tensors.emplace_back(prefix + "adam.v/" + path, v);
  meta[prefix + "adam.steps"] = adam.steps();
}

void Checkpoint::get_optimizer(const std::string& prefix, nn::Adam& adam) const {
  auto load = [&](std::map<std::string, Eigen::MatrixXd>& moments, const std::string& tag) {
    for (auto& [path, m] : moments) {
      const Eigen::MatrixXd* stored = find(prefix + tag + path);
      require(stored != nullptr && stored->rows() == m.rows() && stored->cols() == m.cols(), ErrorKind::FormatError,
              "checkpoint lacks optimizer state " + prefix + tag + path);
      m = *stored;
    }
  };
  load(adam.first_moments(), "adam.m/");
  load(adam.second_moments(), "adam.v/");
  require(meta.contains(prefix + "adam.steps"), ErrorKind::FormatError, "checkpoint lacks optimizer step count");
  adam.set_steps(meta.at(prefix + "adam.steps").get<std::int64_t>());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest = ckpt.meta;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  manifest["tensors"] = list;
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::FormatError, "cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : ckpt.tensors)
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le<float>(out, static_cast<float>(m.data()[i]));
  require(static_cast<bool>(out), ErrorKind::FormatError, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string source = path.string();
  require(std::filesystem::is_regular_file(path), ErrorKind::MissingCheckpoint, "no checkpoint at " + source);
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::MissingCheckpoint, "cannot open checkpoint " + source);
  char magic[4];
  in.read(magic, 4);
  require(in && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::FormatError, source + ": not a checkpoint");
  const auto version = get_le<std::uint32_t>(in, source);
  require(version == kVersion, ErrorKind::FormatError, source + ": unsupported version " + std::to_string(version));
  const auto size = get_le<std::uint64_t>(in, source);
  require(size < (1ull << 32), ErrorKind::FormatError, source + ": manifest too large");
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in), ErrorKind::FormatError, source + ": truncated manifest");

  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, source + ": bad manifest: " + e.what());
  }
  require(ckpt.meta.contains("tensors") && ckpt.meta["tensors"].is_array(), ErrorKind::FormatError,
          source + ": manifest has no tensor list");
  for (const auto& entry : ckpt.meta["tensors"]) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<float>(in, source);
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  ckpt.meta.erase("tensors");
  return ckpt;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  require(!in.fail(), ErrorKind::FormatError, "corrupt RNG state");
}

}  // namespace groovesynth
