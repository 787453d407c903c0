#include "relfuse/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "relfuse/errors.hpp"

namespace relfuse {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

ordered_json layer_json(const DenseLayer& layer) {
  ordered_json j;
  j["in"] = layer.in_dim();
  j["out"] = layer.out_dim();
  j["weights"] = layer.weights.data;
  j["bias"] = layer.bias;
  return j;
}

ordered_json mlp_json(const Mlp& mlp) {
  ordered_json layers = ordered_json::array();
  for (const auto& l : mlp.layers) layers.push_back(layer_json(l));
  return layers;
}

DenseLayer layer_from(const json& j) {
  const auto in = j.at("in").get<std::size_t>();
  const auto out = j.at("out").get<std::size_t>();
  DenseLayer layer(in, out);
  layer.weights.data = j.at("weights").get<std::vector<double>>();
  layer.bias = j.at("bias").get<std::vector<double>>();
  if (layer.weights.data.size() != in * out || layer.bias.size() != out)
    throw DataError("checkpoint layer shape does not match its data");
  return layer;
}

Mlp mlp_from(const json& j) {
  Mlp mlp;
  for (const auto& l : j) mlp.layers.push_back(layer_from(l));
  for (std::size_t i = 1; i < mlp.layers.size(); ++i)
    if (mlp.layers[i].in_dim() != mlp.layers[i - 1].out_dim())
      throw DataError("checkpoint mlp layers do not chain");
  return mlp;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const FusionModel& m = ckpt.model;
  ordered_json j;
  j["format"] = kFormatVersion;
  // Hex string: JSON readers commonly lose precision on 64-bit integers.
  std::ostringstream hash;
  hash << std::hex << ckpt.vocab_hash;
  j["vocab_hash"] = hash.str();
  j["num_predicates"] = m.num_predicates;
  j["feature_dim"] = m.feature_dim;
  j["branches"] = m.mask.to_string();

  ordered_json freq;
  freq["smoothing"] = m.freq.smoothing;
  freq["entries"] = ordered_json::array();
  for (const auto& [key, counts] : m.freq.counts) {
    ordered_json e;
    e["s"] = key.first;
    e["o"] = key.second;
    e["counts"] = counts;
    freq["entries"].push_back(std::move(e));
  }
  j["frequency"] = std::move(freq);
  j["spatial"] = mlp_json(m.spatial_mlp);
  j["visual"]["spo"] = mlp_json(m.visual.spo_head);
  j["visual"]["sub"] = layer_json(m.visual.sub_head);
  j["visual"]["obj"] = layer_json(m.visual.obj_head);
  if (ckpt.attributes) j["attributes"] = mlp_json(ckpt.attributes->mlp);
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<int>() != kFormatVersion)
      throw DataError("unsupported checkpoint format");
    Checkpoint ckpt;
    ckpt.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
    FusionModel& m = ckpt.model;
    m.num_predicates = j.at("num_predicates").get<int>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto branches = j.at("branches").get<std::string>();
    m.mask = BranchMask::parse(branches);
    m.freq.num_predicates = m.num_predicates;
    m.freq.smoothing = j.at("frequency").at("smoothing").get<double>();
    for (const auto& e : j.at("frequency").at("entries")) {
      auto counts = e.at("counts").get<std::vector<std::int64_t>>();
      if (counts.size() != static_cast<std::size_t>(m.num_predicates + 1))
        throw DataError("frequency entry has the wrong width");
      m.freq.counts[{e.at("s").get<int>(), e.at("o").get<int>()}] = std::move(counts);
    }
    m.spatial_mlp = mlp_from(j.at("spatial"));
    m.visual.spo_head = mlp_from(j.at("visual").at("spo"));
    m.visual.sub_head = layer_from(j.at("visual").at("sub"));
    m.visual.obj_head = layer_from(j.at("visual").at("obj"));
    if (j.contains("attributes")) ckpt.attributes = AttributeHead{mlp_from(j["attributes"])};
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace relfuse
