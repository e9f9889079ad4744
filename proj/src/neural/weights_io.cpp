#include "vobs/neural/weights_io.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace vobs::neural {
namespace {

using nlohmann::json;

json matrix_to_json(const MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json vector_to_json(const VectorXd& v) { return matrix_to_json(v); }

MatrixXd matrix_from_json(const json& j, Index rows, Index cols, const std::string& what) {
  const Index r = j.at("rows").get<Index>();
  const Index c = j.at("cols").get<Index>();
  if (r != rows || c != cols)
    throw WeightShapeError(what + ": stored shape " + std::to_string(r) + "x" + std::to_string(c) +
                           ", architecture expects " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  const json& data = j.at("data");
  if (!data.is_array() || static_cast<Index>(data.size()) != r * c)
    throw WeightCorruptionError(what + ": element count does not match its shape");
  MatrixXd m(r, c);
  std::size_t k = 0;
  for (Index i = 0; i < r; ++i)
    for (Index jj = 0; jj < c; ++jj) {
      const json& x = data[k++];
      if (!x.is_number()) throw WeightCorruptionError(what + ": non-numeric element");
      m(i, jj) = x.get<double>();
    }
  return m;
}

template <typename Layer>
std::uint64_t fnv1a_params(std::uint64_t h, const RecurrentNetwork<Layer>& net) {
  for (const auto& view : param_views(const_cast<RecurrentNetwork<Layer>&>(net)))
    for (double x : view.values) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

template <typename Layer>
std::uint64_t checksum(const RecurrentNetwork<Layer>& net,
                       const AdamState<RecurrentNetwork<Layer>>* opt) {
  std::uint64_t h = fnv1a_params(0xcbf29ce484222325ULL, net);
  if (opt) h = fnv1a_params(fnv1a_params(h, opt->m), opt->v);
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

template <typename Layer>
json layers_to_json(const RecurrentNetwork<Layer>& net) {
  json rec = json::array();
  for (const auto& l : net.recurrent_stack)
    rec.push_back({{"input_weights", matrix_to_json(l.input_weights)},
                   {"recurrent_weights", matrix_to_json(l.recurrent_weights)},
                   {"biases", vector_to_json(l.biases)}});
  json dense = json::array();
  for (const auto& d : net.dense_stack)
    dense.push_back({{"weight", matrix_to_json(d.weight)},
                     {"bias", vector_to_json(d.bias)},
                     {"activation", to_string(d.activation)}});
  return {{"recurrent", rec}, {"dense", dense}};
}

template <typename Layer>
void layers_from_json(const json& j, RecurrentNetwork<Layer>& net) {
  const json& rec = j.at("recurrent");
  const json& dense = j.at("dense");
  if (!rec.is_array() || rec.size() != net.recurrent_stack.size())
    throw WeightShapeError("recurrent layer count does not match the architecture");
  if (!dense.is_array() || dense.size() != net.dense_stack.size())
    throw WeightShapeError("dense layer count does not match the architecture");
  for (std::size_t i = 0; i < rec.size(); ++i) {
    Layer& l = net.recurrent_stack[i];
    const std::string p = "recurrent." + std::to_string(i) + ".";
    l.input_weights = matrix_from_json(rec[i].at("input_weights"), l.input_weights.rows(),
                                       l.input_weights.cols(), p + "input_weights");
    l.recurrent_weights =
        matrix_from_json(rec[i].at("recurrent_weights"), l.recurrent_weights.rows(),
                         l.recurrent_weights.cols(), p + "recurrent_weights");
    l.biases = matrix_from_json(rec[i].at("biases"), l.biases.size(), 1, p + "biases");
  }
  for (std::size_t i = 0; i < dense.size(); ++i) {
    DenseWeights& d = net.dense_stack[i];
    const std::string p = "dense." + std::to_string(i) + ".";
    d.weight = matrix_from_json(dense[i].at("weight"), d.weight.rows(), d.weight.cols(),
                                p + "weight");
    d.bias = matrix_from_json(dense[i].at("bias"), d.bias.size(), 1, p + "bias");
    const auto act = parse_activation(dense[i].at("activation").get<std::string>());
    if (act != d.activation) throw WeightShapeError(p + "activation does not match the architecture");
  }
}

json architecture_to_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"recurrent_hidden", a.recurrent_hidden},
          {"dense", a.dense},
          {"feedback_dim", a.feedback_dim},
          {"output_activation", to_string(a.output_activation)}};
}

Architecture architecture_from_json(const json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<Index>();
  a.recurrent_hidden = j.at("recurrent_hidden").get<std::vector<Index>>();
  a.dense = j.at("dense").get<std::vector<Index>>();
  a.feedback_dim = j.at("feedback_dim").get<Index>();
  a.output_activation = parse_activation(j.at("output_activation").get<std::string>());
  if (a.input_dim < 1 || a.feedback_dim < 0 || a.recurrent_hidden.empty() || a.dense.empty())
    throw WeightShapeError("architecture block is inconsistent");
  for (Index h : a.recurrent_hidden)
    if (h < 1) throw WeightShapeError("architecture has a non-positive recurrent width");
  for (Index h : a.dense)
    if (h < 1) throw WeightShapeError("architecture has a non-positive dense width");
  return a;
}

template <typename Layer>
std::vector<std::string> gate_order() {
  if constexpr (std::is_same_v<Layer, LstmLayerWeights>)
    return {"input", "forget", "candidate", "output"};
  else
    return {"update", "reset", "candidate"};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading weight file " + path.string());
  return ss.str();
}

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw WeightCorruptionError(std::string("weight file is not valid JSON (truncated?): ") +
                                e.what());
  }
}

}  // namespace

template <typename Layer>
std::string weights_to_string(const RecurrentNetwork<Layer>& net,
                              const AdamState<RecurrentNetwork<Layer>>* optimizer) {
  net.validate();
  json doc;
  doc["format_version"] = net.format_version;
  doc["cell"] = Layer::kKind;
  doc["gate_order"] = gate_order<Layer>();
  doc["architecture"] = architecture_to_json(net.architecture());
  doc["init_seed"] = net.init_seed;
  json layers = layers_to_json(net);
  doc["recurrent"] = std::move(layers["recurrent"]);
  doc["dense"] = std::move(layers["dense"]);
  if (optimizer) {
    optimizer->m.validate();
    optimizer->v.validate();
    const AdamHyper& h = optimizer->hyper;
    doc["optimizer"] = {{"step", optimizer->step},
                        {"hyper", {{"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"eps", h.eps}}},
                        {"m", layers_to_json(optimizer->m)},
                        {"v", layers_to_json(optimizer->v)}};
  }
  doc["checksum"] = hex64(checksum(net, optimizer));
  return doc.dump(1) + "\n";
}

template <typename Layer>
LoadedWeights<Layer> weights_from_string(const std::string& text) {
  const json doc = parse_document(text);
  try {
    if (!doc.is_object() || !doc.contains("format_version"))
      throw WeightCorruptionError("weight file lacks format_version");
    const int version = doc.at("format_version").get<int>();
    if (version != RecurrentNetwork<Layer>::kFormatVersion)
      throw WeightVersionError("weight file format_version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(RecurrentNetwork<Layer>::kFormatVersion) + ")");
    const std::string cell = doc.at("cell").get<std::string>();
    if (cell != Layer::kKind)
      throw WeightShapeError("weight file holds a '" + cell + "' network, expected '" +
                             Layer::kKind + "'");
    if (doc.at("gate_order").get<std::vector<std::string>>() != gate_order<Layer>())
      throw WeightShapeError("weight file gate order differs from this build");

    const Architecture arch = architecture_from_json(doc.at("architecture"));
    LoadedWeights<Layer> out{RecurrentNetwork<Layer>::zeros(arch), std::nullopt};
    out.net.init_seed = doc.at("init_seed").get<std::uint64_t>();
    layers_from_json(doc, out.net);

    if (doc.contains("optimizer")) {
      const json& o = doc.at("optimizer");
      AdamState<RecurrentNetwork<Layer>> st{RecurrentNetwork<Layer>::zeros(arch),
                                            RecurrentNetwork<Layer>::zeros(arch), 0, {}};
      st.step = o.at("step").get<std::uint64_t>();
      const json& h = o.at("hyper");
      st.hyper = {h.at("lr").get<double>(), h.at("beta1").get<double>(),
                  h.at("beta2").get<double>(), h.at("eps").get<double>()};
      layers_from_json(o.at("m"), st.m);
      layers_from_json(o.at("v"), st.v);
      out.optimizer = std::move(st);
    }

    const std::string stored = doc.at("checksum").get<std::string>();
    const std::string actual =
        hex64(checksum(out.net, out.optimizer ? &*out.optimizer : nullptr));
    if (stored != actual)
      throw WeightCorruptionError("weight file checksum mismatch (stored " + stored +
                                  ", computed " + actual + ")");
    out.net.validate();
    return out;
  } catch (const json::exception& e) {
    throw WeightCorruptionError(std::string("weight file is malformed: ") + e.what());
  }
}

template <typename Layer>
void save_weights(const RecurrentNetwork<Layer>& net, const std::filesystem::path& path,
                  const AdamState<RecurrentNetwork<Layer>>* optimizer) {
  const std::string text = weights_to_string(net, optimizer);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write weight file " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing weight file " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move weight file into place at " + path.string() + ": " + ec.message());
}

template <typename Layer>
LoadedWeights<Layer> load_weights_with_state(const std::filesystem::path& path) {
  try {
    return weights_from_string<Layer>(read_file(path));
  } catch (const IoError& e) {
    // Re-raise with the path attached, preserving the concrete error type.
    const std::string msg = path.string() + ": " + e.what();
    if (dynamic_cast<const WeightVersionError*>(&e)) throw WeightVersionError(msg);
    if (dynamic_cast<const WeightShapeError*>(&e)) throw WeightShapeError(msg);
    if (dynamic_cast<const WeightCorruptionError*>(&e)) throw WeightCorruptionError(msg);
    throw;
  }
}

std::string peek_cell_kind(const std::filesystem::path& path) {
  const json doc = parse_document(read_file(path));
  try {
    return doc.at("cell").get<std::string>();
  } catch (const json::exception&) {
    throw WeightCorruptionError(path.string() + ": weight file lacks a cell kind");
  }
}

#define VOBS_INSTANTIATE(Layer)                                                                  \
  template std::string weights_to_string(const RecurrentNetwork<Layer>&,                         \
                                         const AdamState<RecurrentNetwork<Layer>>*);             \
  template LoadedWeights<Layer> weights_from_string<Layer>(const std::string&);                  \
  template void save_weights(const RecurrentNetwork<Layer>&, const std::filesystem::path&,       \
                             const AdamState<RecurrentNetwork<Layer>>*);                         \
  template LoadedWeights<Layer> load_weights_with_state<Layer>(const std::filesystem::path&);

VOBS_INSTANTIATE(LstmLayerWeights)
VOBS_INSTANTIATE(GruLayerWeights)

}  // namespace vobs::neural
