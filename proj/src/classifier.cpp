#include "capfield/classifier.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace capfield {
namespace {

using nlohmann::json;

void check_shapes(const Classifier& clf) {
  if (clf.layers.empty()) throw InputError("classifier has no layers");
  for (size_t i = 0; i < clf.layers.size(); ++i) {
    const Layer& l = clf.layers[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0)
      throw InputError("layer " + std::to_string(i) + " has an empty weight matrix");
    if (l.bias.size() != l.weights.rows())
      throw InputError("layer " + std::to_string(i) + " bias length " +
                       std::to_string(l.bias.size()) + " does not match rows " +
                       std::to_string(l.weights.rows()));
    if (i > 0 && l.weights.cols() != clf.layers[i - 1].weights.rows())
      throw InputError("layer " + std::to_string(i) + " input width " +
                       std::to_string(l.weights.cols()) + " does not match previous rows " +
                       std::to_string(clf.layers[i - 1].weights.rows()));
  }
  if (clf.layers.back().weights.rows() != 1)
    throw InputError("final layer must produce a single output");
  if (clf.kind == Classifier::Kind::linear && clf.layers.size() != 1)
    throw InputError("linear classifier must have exactly one layer");
}

}  // namespace

Classifier make_linear(const Vector& w, double b) {
  Classifier clf;
  clf.kind = Classifier::Kind::linear;
  Layer l;
  l.weights = w.transpose();
  l.bias = Vector::Constant(1, b);
  clf.layers.push_back(std::move(l));
  return clf;
}

Classifier make_feedforward(std::vector<Layer> layers) {
  Classifier clf;
  clf.kind = Classifier::Kind::feedforward;
  clf.layers = std::move(layers);
  check_shapes(clf);
  return clf;
}

double classify_value(const Classifier& clf, const Vector& x) {
  if (clf.layers.empty()) throw InputError("classifier has no layers");
  if (x.size() != clf.input_dim())
    throw InputError("input dimension " + std::to_string(x.size()) +
                     " does not match classifier input " + std::to_string(clf.input_dim()));
  Vector h = x;
  for (size_t i = 0; i < clf.layers.size(); ++i) {
    h = clf.layers[i].weights * h + clf.layers[i].bias;
    if (i + 1 < clf.layers.size()) h = h.cwiseMax(0.0);
  }
  return h(0);
}

Vector classify_grad(const Classifier& clf, const Vector& x) {
  if (clf.layers.empty()) throw InputError("classifier has no layers");
  if (x.size() != clf.input_dim())
    throw InputError("input dimension " + std::to_string(x.size()) +
                     " does not match classifier input " + std::to_string(clf.input_dim()));

  // Forward pass, keeping each pre-activation to recover the ReLU mask.
  std::vector<Vector> pre;  // pre[i] = W_i h_{i-1} + b_i
  pre.reserve(clf.layers.size());
  Vector h = x;
  for (size_t i = 0; i < clf.layers.size(); ++i) {
    pre.push_back(clf.layers[i].weights * h + clf.layers[i].bias);
    h = pre.back();
    if (i + 1 < clf.layers.size()) h = h.cwiseMax(0.0);
  }

  // Backward pass. ReLU' is 1 strictly above zero, 0 at and below it.
  Vector bar = Vector::Ones(1);
  for (size_t i = clf.layers.size(); i-- > 0;) {
    bar = clf.layers[i].weights.transpose() * bar;
    if (i > 0) bar = bar.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
  }
  return bar;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& fun, const Vector& x,
                        double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  Vector g(x.size());
  Vector xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + h;
    const double fp = fun(xp);
    xp(i) = xi - h;
    const double fm = fun(xp);
    xp(i) = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("non-finite function value in finite-difference probe at coordinate " +
                         std::to_string(i));
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Vector finite_diff_grad(const Classifier& clf, const Vector& x, double h) {
  return finite_diff_grad([&clf](const Vector& z) { return classify_value(clf, z); }, x, h);
}

std::string classifier_to_json(const Classifier& clf) {
  check_shapes(clf);
  json doc;
  doc["kind"] = clf.kind == Classifier::Kind::linear ? "linear" : "feedforward";
  doc["layers"] = json::array();
  for (const Layer& l : clf.layers) {
    json jl;
    jl["rows"] = l.weights.rows();
    jl["cols"] = l.weights.cols();
    std::vector<double> w;
    w.reserve(static_cast<size_t>(l.weights.size()));
    for (Index r = 0; r < l.weights.rows(); ++r)
      for (Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    jl["weights"] = w;
    jl["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    doc["layers"].push_back(std::move(jl));
  }
  return doc.dump(2);
}

Classifier classifier_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid classifier JSON: ") + e.what());
  }
  Classifier clf;
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "linear") {
      clf.kind = Classifier::Kind::linear;
    } else if (kind == "feedforward") {
      clf.kind = Classifier::Kind::feedforward;
    } else {
      throw InputError("unknown classifier kind \"" + kind + "\"");
    }
    for (const json& jl : doc.at("layers")) {
      const auto rows = jl.at("rows").get<Index>();
      const auto cols = jl.at("cols").get<Index>();
      const auto w = jl.at("weights").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (rows <= 0 || cols <= 0)
        throw InputError("layer dimensions must be positive");
      if (static_cast<Index>(w.size()) != rows * cols)
        throw InputError("layer weights length " + std::to_string(w.size()) +
                         " does not match rows*cols " + std::to_string(rows * cols));
      if (static_cast<Index>(b.size()) != rows)
        throw InputError("layer bias length " + std::to_string(b.size()) +
                         " does not match rows " + std::to_string(rows));
      Layer l;
      l.weights.resize(rows, cols);
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
          l.weights(r, c) = w[static_cast<size_t>(r * cols + c)];
      l.bias = Eigen::Map<const Vector>(b.data(), rows);
      clf.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid classifier JSON: ") + e.what());
  }
  check_shapes(clf);
  return clf;
}

Classifier load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return classifier_from_json(buf.str());
}

void save_classifier(const Classifier& clf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file: " + path);
  out << classifier_to_json(clf) << "\n";
}

double accuracy(const Classifier& clf, const std::vector<Example>& data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const Example& e : data) {
    const double f = classify_value(clf, e.features);
    const int pred = f >= 0.0 ? +1 : -1;
    if (pred == e.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace capfield
