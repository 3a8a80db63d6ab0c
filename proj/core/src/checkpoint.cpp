#include "protofuse/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

void write_doubles(std::ostream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(double) * n));
}

void read_doubles(std::istream& in, double* data, Eigen::Index n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(double) * n));
  if (!in) throw DataError("checkpoint: truncated parameter blob");
}

}  // namespace

const Mlp& Checkpoint::network(const std::string& name) const {
  for (const auto& [n, net] : networks) {
    if (n == name) return net;
  }
  throw DataError("checkpoint '" + module + "': missing network '" + name + "'");
}

double Checkpoint::scalar(const std::string& name) const {
  for (const auto& [n, v] : scalars) {
    if (n == name) return v;
  }
  throw DataError("checkpoint '" + module + "': missing scalar '" + name + "'");
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  nlohmann::json manifest;
  manifest["module"] = ckpt.module;
  std::size_t count = 0;
  auto nets = nlohmann::json::array();
  for (const auto& [name, net] : ckpt.networks) {
    auto acts = nlohmann::json::array();
    for (const auto& layer : net.layers()) acts.push_back(to_string(layer.activation));
    nets.push_back({{"name", name}, {"dims", net.dims()}, {"activations", acts}});
    count += net.parameter_count();
  }
  manifest["networks"] = std::move(nets);
  auto scalar_names = nlohmann::json::array();
  for (const auto& [name, v] : ckpt.scalars) scalar_names.push_back(name);
  manifest["scalars"] = std::move(scalar_names);
  manifest["parameter_count"] = count + ckpt.scalars.size();
  out << manifest.dump() << '\n';
  for (const auto& [name, net] : ckpt.networks) {
    for (const auto& layer : net.layers()) {
      write_doubles(out, layer.weight.data(), layer.weight.size());
      write_doubles(out, layer.bias.data(), layer.bias.size());
    }
  }
  for (const auto& [name, v] : ckpt.scalars) write_doubles(out, &v, 1);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint: empty file");
  Checkpoint ckpt;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
    ckpt.module = manifest.at("module").get<std::string>();
    for (const auto& n : manifest.at("networks")) {
      const auto dims = n.at("dims").get<std::vector<int>>();
      const auto acts = n.at("activations").get<std::vector<std::string>>();
      if (dims.size() < 2 || acts.size() + 1 != dims.size()) {
        throw DataError("checkpoint: inconsistent dims/activations");
      }
      std::vector<DenseLayer> layers;
      for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight.resize(dims[l + 1], dims[l]);
        layer.bias.resize(dims[l + 1]);
        layer.activation = parse_activation(acts[l]);
        layers.push_back(std::move(layer));
      }
      ckpt.networks.emplace_back(n.at("name").get<std::string>(), Mlp(std::move(layers)));
    }
    for (const auto& s : manifest.at("scalars")) ckpt.scalars.emplace_back(s.get<std::string>(), 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  for (auto& [name, net] : ckpt.networks) {
    for (auto& layer : net.layers()) {
      read_doubles(in, layer.weight.data(), layer.weight.size());
      read_doubles(in, layer.bias.data(), layer.bias.size());
    }
  }
  for (auto& [name, v] : ckpt.scalars) read_doubles(in, &v, 1);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  write_checkpoint(ckpt, out);
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace protofuse
