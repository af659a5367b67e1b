#include "sidlab/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace sidlab {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

namespace {

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = t.data();
  return j;
}

Tensor tensor_from_json(const json& j, bool requires_grad = false) {
  Tensor t(j.at("shape").get<std::vector<int>>(),
           j.at("data").get<std::vector<double>>());
  t.requires_grad = requires_grad;
  return t;
}

json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = static_cast<int>(m.rows());
  j["cols"] = static_cast<int>(m.cols());
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(m.size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  j["data"] = std::move(flat);
  return j;
}

Mat mat_from_json(const json& j) {
  const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<int>(flat.size()) != rows * cols)
    throw std::runtime_error("checkpoint: matrix size mismatch");
  Mat m(rows, cols);
  size_t i = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = flat[i++];
  return m;
}

json vec_to_json(const Vec& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vec vec_from_json(const json& j) {
  const auto flat = j.get<std::vector<double>>();
  Vec v(static_cast<Eigen::Index>(flat.size()));
  for (size_t i = 0; i < flat.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = flat[i];
  return v;
}

json classifier_to_json(const AnyClassifier& c);

json affine_to_json(const AffineClassifier& a) {
  json j;
  j["kind"] = "affine";
  j["weights"] = mat_to_json(a.weights);
  j["biases"] = vec_to_json(a.biases);
  return j;
}

AffineClassifier affine_from_json(const json& j) {
  AffineClassifier a;
  a.weights = mat_from_json(j.at("weights"));
  a.biases = vec_from_json(j.at("biases"));
  return a;
}

json quadratic_to_json(const QuadraticClassifier& q) {
  json j;
  j["kind"] = "quadratic";
  j["means"] = json::array();
  j["precisions"] = json::array();
  j["constants"] = q.constants;
  for (const Vec& m : q.means) j["means"].push_back(vec_to_json(m));
  for (const Mat& p : q.precisions) j["precisions"].push_back(mat_to_json(p));
  return j;
}

QuadraticClassifier quadratic_from_json(const json& j) {
  QuadraticClassifier q;
  for (const auto& m : j.at("means")) q.means.push_back(vec_from_json(m));
  for (const auto& p : j.at("precisions")) q.precisions.push_back(mat_from_json(p));
  q.constants = j.at("constants").get<std::vector<double>>();
  return q;
}

json mlp_to_json(const MlpClassifier& m) {
  json j;
  j["kind"] = "mlp";
  j["layer_sizes"] = m.layer_sizes;
  j["weights"] = json::array();
  j["biases"] = json::array();
  for (const Tensor& w : m.weights) j["weights"].push_back(tensor_to_json(w));
  for (const Tensor& b : m.biases) j["biases"].push_back(tensor_to_json(b));
  return j;
}

MlpClassifier mlp_from_json(const json& j) {
  MlpClassifier m;
  m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  for (const auto& w : j.at("weights"))
    m.weights.push_back(tensor_from_json(w, true));
  for (const auto& b : j.at("biases"))
    m.biases.push_back(tensor_from_json(b, true));
  return m;
}

json dual_to_json(const DualClassifier& d) {
  json j;
  j["kind"] = "dual";
  j["wawt_weights"] = {d.wawt_weights.w1, d.wawt_weights.w2, d.wawt_weights.w3,
                       d.wawt_weights.w4};
  j["filter_name"] = d.filter.name;
  j["filter_lowpass"] = d.filter.lowpass;
  j["image_side"] = d.image_side;
  j["channels"] = d.in_channels;
  if (std::holds_alternative<AffineClassifier>(d.inner))
    j["inner"] = affine_to_json(std::get<AffineClassifier>(d.inner));
  else if (std::holds_alternative<QuadraticClassifier>(d.inner))
    j["inner"] = quadratic_to_json(std::get<QuadraticClassifier>(d.inner));
  else
    j["inner"] = mlp_to_json(std::get<MlpClassifier>(d.inner));
  return j;
}

DualClassifier dual_from_json(const json& j) {
  DualClassifier d;
  const auto w = j.at("wawt_weights").get<std::vector<double>>();
  if (w.size() != 4) throw std::runtime_error("checkpoint: bad wawt weights");
  d.wawt_weights = {w[0], w[1], w[2], w[3]};
  d.filter = WaveletFilter::from_lowpass(
      j.at("filter_name").get<std::string>(),
      j.at("filter_lowpass").get<std::vector<double>>());
  d.image_side = j.at("image_side").get<int>();
  d.in_channels = j.at("channels").get<int>();
  const json& inner = j.at("inner");
  const std::string kind = inner.at("kind").get<std::string>();
  if (kind == "affine")
    d.inner = affine_from_json(inner);
  else if (kind == "quadratic")
    d.inner = quadratic_from_json(inner);
  else if (kind == "mlp")
    d.inner = mlp_from_json(inner);
  else
    throw std::runtime_error("checkpoint: unknown inner kind " + kind);
  d.rebuild_transform();
  return d;
}

json classifier_to_json(const AnyClassifier& c) {
  if (std::holds_alternative<AffineClassifier>(c.model))
    return affine_to_json(std::get<AffineClassifier>(c.model));
  if (std::holds_alternative<QuadraticClassifier>(c.model))
    return quadratic_to_json(std::get<QuadraticClassifier>(c.model));
  if (std::holds_alternative<MlpClassifier>(c.model))
    return mlp_to_json(std::get<MlpClassifier>(c.model));
  return dual_to_json(std::get<DualClassifier>(c.model));
}

}  // namespace

const IClassifier& AnyClassifier::ref() const {
  return *std::visit([](const auto& m) -> const IClassifier* { return &m; },
                     model);
}

std::string AnyClassifier::kind() const {
  if (std::holds_alternative<AffineClassifier>(model)) return "affine";
  if (std::holds_alternative<QuadraticClassifier>(model)) return "quadratic";
  if (std::holds_alternative<MlpClassifier>(model)) return "mlp";
  return "dual";
}

void save_checkpoint(const std::string& path, const AnyClassifier& c) {
  json j = classifier_to_json(c);
  j["format"] = "sidlab-checkpoint-v1";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(1) << "\n";
}

AnyClassifier load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "sidlab-checkpoint-v1")
    throw std::runtime_error("load_checkpoint: unrecognized format in " + path);
  const std::string kind = j.at("kind").get<std::string>();
  AnyClassifier c;
  if (kind == "affine")
    c.model = affine_from_json(j);
  else if (kind == "quadratic")
    c.model = quadratic_from_json(j);
  else if (kind == "mlp")
    c.model = mlp_from_json(j);
  else if (kind == "dual")
    c.model = dual_from_json(j);
  else
    throw std::runtime_error("load_checkpoint: unknown kind " + kind);
  return c;
}

void save_sid(const std::string& path, const SidNet& net) {
  json j;
  j["format"] = "sidlab-sid-v1";
  j["concat_features"] = net.concat_features;
  j["w1"] = tensor_to_json(net.w1);
  j["b1"] = tensor_to_json(net.b1);
  j["w2"] = tensor_to_json(net.w2);
  j["b2"] = tensor_to_json(net.b2);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_sid: cannot open " + path);
  out << j.dump(1) << "\n";
}

SidNet load_sid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_sid: cannot open " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "sidlab-sid-v1")
    throw std::runtime_error("load_sid: unrecognized format in " + path);
  SidNet net;
  net.concat_features = j.at("concat_features").get<bool>();
  net.w1 = tensor_from_json(j.at("w1"), true);
  net.b1 = tensor_from_json(j.at("b1"), true);
  net.w2 = tensor_from_json(j.at("w2"), true);
  net.b2 = tensor_from_json(j.at("b2"), true);
  return net;
}

}  // namespace sidlab
