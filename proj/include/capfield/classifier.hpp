#pragma once

#include <functional>
#include <string>
#include <vector>

#include "capfield/common.hpp"

namespace capfield {

// One labeled sample. Labels are restricted to the binary +1/-1 coding used
// by the margin-style decision rule throughout the library.
struct Example {
  Vector features;
  int label = +1;  // +1 or -1
};

// One affine layer, y = W x + b. ReLU is applied between layers, never
// after the last one.
struct Layer {
  Matrix weights;  // rows x cols
  Vector bias;     // rows
};

// A differentiable scorer f: R^d -> R. Linear models hold exactly one layer
// with a single output row; feedforward models hold one or more layers and
// apply ReLU between them. The sign of f(x) is the predicted class.
struct Classifier {
  enum class Kind { linear, feedforward };

  Kind kind = Kind::linear;
  std::vector<Layer> layers;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weights.cols(); }
};

// Convenience constructors.
Classifier make_linear(const Vector& w, double b);
Classifier make_feedforward(std::vector<Layer> layers);

// Scalar decision value f(x).
double classify_value(const Classifier& clf, const Vector& x);

// Gradient of f at x via reverse-mode accumulation through the layers.
// ReLU contributes subgradient 0 at exactly 0.
Vector classify_grad(const Classifier& clf, const Vector& x);

// Central-difference gradient of an arbitrary scalar function, the oracle
// against which every analytic gradient in the library is tested. Throws
// NumericError when fun returns a non-finite value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& fun, const Vector& x,
                        double h = 1e-6);

// Convenience overload differentiating the classifier's decision value.
Vector finite_diff_grad(const Classifier& clf, const Vector& x, double h = 1e-6);

// JSON (de)serialization. Weights are stored row-major.
std::string classifier_to_json(const Classifier& clf);
Classifier classifier_from_json(const std::string& text);
Classifier load_classifier(const std::string& path);
void save_classifier(const Classifier& clf, const std::string& path);

// Fraction of examples whose sign(f(x)) matches the label; sign(0) counts
// as +1.
double accuracy(const Classifier& clf, const std::vector<Example>& data);

}  // namespace capfield
