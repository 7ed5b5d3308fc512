#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedsumm/errors.hpp"

namespace fedsumm {

// Flat parameter vector shared by every model kind. Dimension and finiteness
// are checked at operation boundaries; the layout per kind is documented at
// param_dim().
using ParamVector = std::vector<double>;

enum class ModelKind { kLinear, kLogistic, kMlp };
enum class LossKind { kSquaredError, kCrossEntropy };

std::string to_string(ModelKind kind);
std::string to_string(LossKind kind);
ModelKind model_kind_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::kLinear;
  int input_dim = 0;
  int output_dim = 0;
  int hidden_dim = 0;  // 0 unless kind == kMlp
  LossKind loss = LossKind::kSquaredError;
};

// One training sample. `label` holds the class index for cross-entropy
// targets; `target` holds the real-valued target for squared error. Exactly
// one of the two is meaningful for a given ModelSpec.
struct Example {
  std::vector<double> features;
  int label = -1;
  std::vector<double> target;

  bool operator==(const Example&) const = default;
};

// Parameter layouts (all row-major, no bias terms; callers wanting an
// intercept append a constant feature):
//   linear / logistic: W is output_dim x input_dim          -> out*in params
//   mlp:               W1 hidden x input, W2 output x hidden -> hid*(in+out)
int param_dim(const ModelSpec& spec);

// Throws ConfigError on invalid dimensions or kind/loss combinations
// (linear requires squared error, logistic requires cross entropy, mlp
// accepts both).
void validate(const ModelSpec& spec);

// Mean per-example loss over the batch. Per-example losses are accumulated
// left to right in batch order through a compensated sum, so the value is
// independent of batch ordering in practice. Squared error is the plain sum
// of squared residuals per example (no 1/2 factor); cross entropy is the
// negative log softmax probability of the labeled class, in nats.
double loss(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch);

// Gradient of `loss` with respect to w; same accumulation scheme per
// coordinate.
ParamVector gradient(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch);

// w - eta * gradient(spec, w, batch). Pure; w is not modified.
ParamVector sgd_step(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch,
                     double eta);

}  // namespace fedsumm
