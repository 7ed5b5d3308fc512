#include "fedsumm/model.hpp"

#include <cmath>
#include <cstddef>

#include "fedsumm/numeric.hpp"

namespace fedsumm {

namespace {

void check_batch(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch) {
  validate(spec);
  if (batch.empty()) {
    throw ConfigError("loss/gradient: batch must be non-empty");
  }
  if (static_cast<int>(w.size()) != param_dim(spec)) {
    throw ConfigError("loss/gradient: parameter vector has dim " + std::to_string(w.size()) +
                      ", model implies " + std::to_string(param_dim(spec)));
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& e = batch[i];
    if (static_cast<int>(e.features.size()) != spec.input_dim) {
      throw ConfigError("example " + std::to_string(i) + ": feature length " +
                        std::to_string(e.features.size()) + " != input_dim " +
                        std::to_string(spec.input_dim));
    }
    if (spec.loss == LossKind::kCrossEntropy) {
      if (e.label < 0 || e.label >= spec.output_dim) {
        throw ConfigError("example " + std::to_string(i) + ": class index " +
                          std::to_string(e.label) + " out of range [0, " +
                          std::to_string(spec.output_dim) + ")");
      }
    } else {
      if (static_cast<int>(e.target.size()) != spec.output_dim) {
        throw ConfigError("example " + std::to_string(i) + ": target length " +
                          std::to_string(e.target.size()) + " != output_dim " +
                          std::to_string(spec.output_dim));
      }
    }
  }
}

// z = W x for a row-major out x in matrix.
void matvec(const double* w_block, int rows, int cols, const std::vector<double>& x,
            std::vector<double>& z) {
  z.assign(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = w_block + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    z[static_cast<std::size_t>(r)] = acc;
  }
}

// log(sum_j exp(z_j)) with max subtraction; also returns the max.
double log_sum_exp(const std::vector<double>& z, double& zmax) {
  zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return zmax + std::log(s);
}

struct Forward {
  std::vector<double> hidden;  // tanh activations, mlp only
  std::vector<double> logits;  // model output z
};

void forward(const ModelSpec& spec, const ParamVector& w, const Example& e, Forward& f) {
  if (spec.kind == ModelKind::kMlp) {
    matvec(w.data(), spec.hidden_dim, spec.input_dim, e.features, f.hidden);
    for (double& h : f.hidden) h = std::tanh(h);
    const double* w2 = w.data() + static_cast<std::size_t>(spec.hidden_dim) * spec.input_dim;
    f.logits.assign(static_cast<std::size_t>(spec.output_dim), 0.0);
    for (int o = 0; o < spec.output_dim; ++o) {
      const double* row = w2 + static_cast<std::size_t>(o) * spec.hidden_dim;
      double acc = 0.0;
      for (int k = 0; k < spec.hidden_dim; ++k) acc += row[k] * f.hidden[static_cast<std::size_t>(k)];
      f.logits[static_cast<std::size_t>(o)] = acc;
    }
  } else {
    matvec(w.data(), spec.output_dim, spec.input_dim, e.features, f.logits);
  }
}

double example_loss(const ModelSpec& spec, const Forward& f, const Example& e) {
  if (spec.loss == LossKind::kSquaredError) {
    double acc = 0.0;
    for (int o = 0; o < spec.output_dim; ++o) {
      double r = f.logits[static_cast<std::size_t>(o)] - e.target[static_cast<std::size_t>(o)];
      acc += r * r;
    }
    return acc;
  }
  double zmax = 0.0;
  double lse = log_sum_exp(f.logits, zmax);
  return lse - f.logits[static_cast<std::size_t>(e.label)];
}

// dz = dL/dlogits for one example.
void loss_backward(const ModelSpec& spec, const Forward& f, const Example& e,
                   std::vector<double>& dz) {
  dz.assign(static_cast<std::size_t>(spec.output_dim), 0.0);
  if (spec.loss == LossKind::kSquaredError) {
    for (int o = 0; o < spec.output_dim; ++o) {
      dz[static_cast<std::size_t>(o)] =
          2.0 * (f.logits[static_cast<std::size_t>(o)] - e.target[static_cast<std::size_t>(o)]);
    }
  } else {
    double zmax = 0.0;
    double lse = log_sum_exp(f.logits, zmax);
    for (int o = 0; o < spec.output_dim; ++o) {
      dz[static_cast<std::size_t>(o)] = std::exp(f.logits[static_cast<std::size_t>(o)] - lse);
    }
    dz[static_cast<std::size_t>(e.label)] -= 1.0;
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kMlp: return "mlp";
  }
  return "?";
}

std::string to_string(LossKind kind) {
  return kind == LossKind::kSquaredError ? "squared-error" : "cross-entropy";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::kLinear;
  if (s == "logistic") return ModelKind::kLogistic;
  if (s == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind '" + s + "' (expected linear|logistic|mlp)");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "squared-error") return LossKind::kSquaredError;
  if (s == "cross-entropy") return LossKind::kCrossEntropy;
  throw ConfigError("unknown loss kind '" + s + "' (expected squared-error|cross-entropy)");
}

int param_dim(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kMlp) {
    return spec.hidden_dim * (spec.input_dim + spec.output_dim);
  }
  return spec.input_dim * spec.output_dim;
}

void validate(const ModelSpec& spec) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0) {
    throw ConfigError("model: input_dim and output_dim must be positive");
  }
  if (spec.kind == ModelKind::kMlp) {
    if (spec.hidden_dim <= 0) throw ConfigError("model: mlp requires hidden_dim > 0");
  } else if (spec.hidden_dim != 0) {
    throw ConfigError("model: hidden_dim must be 0 unless kind is mlp");
  }
  if (spec.kind == ModelKind::kLinear && spec.loss != LossKind::kSquaredError) {
    throw ConfigError("model: linear requires squared-error loss");
  }
  if (spec.kind == ModelKind::kLogistic && spec.loss != LossKind::kCrossEntropy) {
    throw ConfigError("model: logistic requires cross-entropy loss");
  }
  if (spec.loss == LossKind::kCrossEntropy && spec.output_dim < 2) {
    throw ConfigError("model: cross-entropy requires output_dim >= 2");
  }
}

double loss(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch) {
  check_batch(spec, w, batch);
  NeumaierSum acc;
  Forward f;
  for (const Example& e : batch) {
    forward(spec, w, e, f);
    acc.add(example_loss(spec, f, e));
  }
  double result = acc.value() / static_cast<double>(batch.size());
  if (!std::isfinite(result)) {
    throw NumericalError("loss: non-finite batch loss");
  }
  return result;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch) {
  check_batch(spec, w, batch);
  const std::size_t dim = w.size();
  std::vector<NeumaierSum> acc(dim);
  std::vector<double> scratch(dim);
  std::vector<double> dz;
  std::vector<double> dh;
  Forward f;

  for (const Example& e : batch) {
    forward(spec, w, e, f);
    loss_backward(spec, f, e, dz);
    std::fill(scratch.begin(), scratch.end(), 0.0);
    if (spec.kind == ModelKind::kMlp) {
      const std::size_t w2_off = static_cast<std::size_t>(spec.hidden_dim) * spec.input_dim;
      // dW2[o,k] = dz_o * h_k; dh_k = sum_o dz_o W2[o,k]
      dh.assign(static_cast<std::size_t>(spec.hidden_dim), 0.0);
      for (int o = 0; o < spec.output_dim; ++o) {
        const double g = dz[static_cast<std::size_t>(o)];
        const double* w2row = w.data() + w2_off + static_cast<std::size_t>(o) * spec.hidden_dim;
        double* grow = scratch.data() + w2_off + static_cast<std::size_t>(o) * spec.hidden_dim;
        for (int k = 0; k < spec.hidden_dim; ++k) {
          grow[k] = g * f.hidden[static_cast<std::size_t>(k)];
          dh[static_cast<std::size_t>(k)] += g * w2row[k];
        }
      }
      // dW1[k,j] = dh_k * (1 - h_k^2) * x_j
      for (int k = 0; k < spec.hidden_dim; ++k) {
        double h = f.hidden[static_cast<std::size_t>(k)];
        double da = dh[static_cast<std::size_t>(k)] * (1.0 - h * h);
        double* grow = scratch.data() + static_cast<std::size_t>(k) * spec.input_dim;
        for (int j = 0; j < spec.input_dim; ++j) grow[j] = da * e.features[static_cast<std::size_t>(j)];
      }
    } else {
      for (int o = 0; o < spec.output_dim; ++o) {
        const double g = dz[static_cast<std::size_t>(o)];
        double* grow = scratch.data() + static_cast<std::size_t>(o) * spec.input_dim;
        for (int j = 0; j < spec.input_dim; ++j) grow[j] = g * e.features[static_cast<std::size_t>(j)];
      }
    }
    for (std::size_t i = 0; i < dim; ++i) acc[i].add(scratch[i]);
  }

  ParamVector grad(dim);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < dim; ++i) {
    grad[i] = acc[i].value() * inv_n;
    if (!std::isfinite(grad[i])) {
      throw NumericalError("gradient: non-finite value at parameter index " + std::to_string(i));
    }
  }
  return grad;
}

ParamVector sgd_step(const ModelSpec& spec, const ParamVector& w, std::span<const Example> batch,
                     double eta) {
  if (eta < 0.0) throw ConfigError("sgd_step: eta must be >= 0");
  if (eta == 0.0) {
    check_batch(spec, w, batch);
    return w;
  }
  ParamVector g = gradient(spec, w, batch);
  ParamVector next = w;
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= eta * g[i];
  return next;
}

}  // namespace fedsumm
