#include "hpf/neural/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace hpf::neural {

namespace {

using nlohmann::json;

json tensor_json(const auto& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::vector<double>(t.data(), t.data() + t.size())}};
}

json spec_json(const StackedSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"kind", to_string(l.kind)}, {"hidden", l.hidden}, {"returns_sequence", l.returns_sequence}});
  }
  return {{"input_dim", spec.input_dim},
          {"output_dim", spec.output_dim},
          {"output_activation", to_string(spec.output_activation)},
          {"layers", layers}};
}

StackedSpec spec_from_json(const json& j) {
  StackedSpec spec;
  spec.input_dim = j.at("input_dim").get<Index>();
  spec.output_dim = j.at("output_dim").get<Index>();
  auto act = parse_activation(j.at("output_activation").get<std::string>());
  if (!act) throw FormatError("checkpoint has an unknown output activation");
  spec.output_activation = *act;
  for (const auto& l : j.at("layers")) {
    const auto kind = l.at("kind").get<std::string>();
    if (kind != "elman" && kind != "lstm") throw FormatError("checkpoint has an unknown layer kind '" + kind + "'");
    spec.layers.push_back({kind == "elman" ? CellKind::elman : CellKind::lstm, l.at("hidden").get<Index>(),
                           l.at("returns_sequence").get<bool>()});
  }
  return spec;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& cp) {
  json tensors = json::object();
  for_each_tensor(cp.model.params(), [&](const std::string& name, const auto& t) { tensors[name] = tensor_json(t); });
  json j{{"format", "hpf-checkpoint"},
         {"format_version", Checkpoint::kFormatVersion},
         {"seed", cp.seed},
         {"window_len", cp.window_len},
         {"spec", spec_json(cp.model.spec())},
         {"tensors", tensors},
         {"districts", cp.districts}};
  if (cp.normalization) {
    const auto& n = *cp.normalization;
    j["normalization"] = {{"scope", n.scope == prep::NormScope::global ? "global" : "per_district"},
                          {"lo", std::vector<double>(n.lo.data(), n.lo.data() + n.lo.size())},
                          {"hi", std::vector<double>(n.hi.data(), n.hi.data() + n.hi.size())}};
  }
  if (cp.last_month) j["last_month"] = cp.last_month->to_string();
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "hpf-checkpoint") throw FormatError("not an hpf checkpoint");
    if (j.at("format_version").get<int>() != Checkpoint::kFormatVersion) {
      throw FormatError("unsupported checkpoint format version");
    }
    const StackedSpec spec = spec_from_json(j.at("spec"));
    spec.validate();
    // Shape the parameters from the model spec, then overwrite every tensor from the file.
    Model<double> shaped = init_params<double>(spec, 0);
    Parameters<double> params = shaped.params();
    const auto& tensors = j.at("tensors");
    for_each_tensor(params, [&](const std::string& name, auto& t) {
      const auto& e = tensors.at(name);
      const auto data = e.at("data").get<std::vector<double>>();
      if (e.at("rows").get<Index>() != t.rows() || e.at("cols").get<Index>() != t.cols() ||
          static_cast<Index>(data.size()) != t.size()) {
        throw FormatError("checkpoint tensor " + name + " has the wrong shape");
      }
      std::copy(data.begin(), data.end(), t.data());
    });

    Checkpoint cp;
    cp.model = Model<double>(spec, std::move(params));
    cp.seed = j.at("seed").get<std::uint64_t>();
    cp.window_len = j.at("window_len").get<Index>();
    cp.districts = j.at("districts").get<std::vector<std::string>>();
    if (j.contains("normalization")) {
      const auto& n = j["normalization"];
      prep::NormalizationParams p;
      p.scope = n.at("scope").get<std::string>() == "global" ? prep::NormScope::global : prep::NormScope::per_district;
      const auto lo = n.at("lo").get<std::vector<double>>();
      const auto hi = n.at("hi").get<std::vector<double>>();
      if (lo.size() != hi.size()) throw FormatError("checkpoint normalization bounds differ in length");
      p.lo = Eigen::Map<const VectorXd>(lo.data(), static_cast<Index>(lo.size()));
      p.hi = Eigen::Map<const VectorXd>(hi.data(), static_cast<Index>(hi.size()));
      cp.normalization = std::move(p);
    }
    if (j.contains("last_month")) {
      cp.last_month = ingest::YearMonth::parse_iso(j["last_month"].get<std::string>());
      if (!cp.last_month) throw FormatError("checkpoint has a malformed last_month");
    }
    return cp;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint is malformed: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace hpf::neural
