#include "macflow/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace macflow {
namespace {

constexpr const char* kMagic = "MACFLOW-CHECKPOINT";

void write_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double read_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::vector<std::string> tensor_names(const MlpParams& p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p.layer_count(); ++i) {
    const std::string prefix = "l" + std::to_string(i) + ".";
    names.push_back(prefix + "weight");
    names.push_back(prefix + "bias");
    if (!p.layer(i).ln_gain.empty()) {
      names.push_back(prefix + "ln_gain");
      names.push_back(prefix + "ln_offset");
    }
  }
  return names;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedNetwork>& networks) {
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  std::size_t total = 0;
  nlohmann::json nets = nlohmann::json::array();
  for (const NamedNetwork& n : networks) {
    if (!n.params.all_finite()) {
      throw std::runtime_error("refusing to checkpoint non-finite parameters of '" + n.name + "'");
    }
    const MlpArchitecture& a = n.params.architecture();
    nlohmann::json entry{{"name", n.name},
                         {"input", a.input},
                         {"hidden", a.hidden},
                         {"output", a.output},
                         {"layer_norm", a.layer_norm},
                         {"activation", to_string(a.activation)}};
    const auto names = tensor_names(n.params);
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t k = 0;
    n.params.for_each_tensor([&](const Tensor& t) {
      tensors.push_back({{"name", names[k++]}, {"shape", t.shape()}});
      total += t.size();
    });
    entry["tensors"] = std::move(tensors);
    nets.push_back(std::move(entry));
  }
  manifest["networks"] = std::move(nets);
  manifest["value_count"] = total;

  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
    out << kMagic << ' ' << kCheckpointVersion << '\n' << manifest.dump() << '\n';
    for (const NamedNetwork& n : networks) {
      n.params.for_each_tensor([&](const Tensor& t) {
        for (double v : t.values()) write_le(out, v);
      });
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedNetwork> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string header;
  std::getline(in, header);
  if (header != std::string(kMagic) + " " + std::to_string(kCheckpointVersion)) {
    throw std::runtime_error("not a version-" + std::to_string(kCheckpointVersion) +
                             " checkpoint: " + path.string());
  }
  std::string manifest_line;
  std::getline(in, manifest_line);
  const auto manifest = nlohmann::json::parse(manifest_line);

  std::vector<NamedNetwork> out;
  for (const auto& entry : manifest.at("networks")) {
    MlpArchitecture arch;
    arch.input = entry.at("input").get<std::size_t>();
    arch.hidden = entry.at("hidden").get<std::vector<std::size_t>>();
    arch.output = entry.at("output").get<std::size_t>();
    arch.layer_norm = entry.at("layer_norm").get<bool>();
    arch.activation = activation_from_string(entry.at("activation").get<std::string>());
    MlpParams params = MlpParams::zeros(arch);
    const auto& tensors = entry.at("tensors");
    std::size_t k = 0;
    params.for_each_tensor([&](Tensor& t) {
      if (k >= tensors.size() ||
          tensors[k].at("shape").get<std::vector<std::size_t>>() != t.shape()) {
        throw std::runtime_error("checkpoint manifest shape mismatch in network '" +
                                 entry.at("name").get<std::string>() + "'");
      }
      ++k;
      for (double& v : t.values()) v = read_le(in);
    });
    out.push_back({entry.at("name").get<std::string>(), std::move(params)});
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint has trailing bytes: " + path.string());
  }
  return out;
}

const MlpParams& find_network(const std::vector<NamedNetwork>& networks, const std::string& name) {
  for (const NamedNetwork& n : networks) {
    if (n.name == name) return n.params;
  }
  throw std::runtime_error("checkpoint has no network named '" + name + "'");
}

}  // namespace macflow
