#include "fedsumm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "fedsumm/errors.hpp"

namespace fedsumm {

namespace {

double f_measure(double precision, double recall) {
  double denom = precision + recall;
  if (denom == 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

// n-grams keyed by joining tokens with an unlikely separator byte.
std::unordered_map<std::string, int> ngram_counts(const TokenSeq& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j > 0) key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n) {
  if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
  auto cand = ngram_counts(candidate, n);
  auto ref = ngram_counts(reference, n);

  long long cand_total = 0;
  for (const auto& [gram, count] : cand) cand_total += count;
  long long ref_total = 0;
  for (const auto& [gram, count] : ref) ref_total += count;

  long long overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }

  RougeScore score;
  score.precision = cand_total > 0 ? static_cast<double>(overlap) / cand_total : 0.0;
  score.recall = ref_total > 0 ? static_cast<double>(overlap) / ref_total : 0.0;
  score.f1 = f_measure(score.precision, score.recall);
  return score;
}

RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  RougeScore score;
  if (m == 0 || n == 0) return score;

  // Rolling-row LCS table.
  std::vector<int> prev(n + 1, 0), curr(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (candidate[i - 1] == reference[j - 1]) {
        curr[j] = prev[j - 1] + 1;
      } else {
        curr[j] = std::max(prev[j], curr[j - 1]);
      }
    }
    std::swap(prev, curr);
  }
  double lcs = static_cast<double>(prev[n]);
  score.precision = lcs / static_cast<double>(m);
  score.recall = lcs / static_cast<double>(n);
  score.f1 = f_measure(score.precision, score.recall);
  return score;
}

double perplexity(const ModelSpec& spec, const ParamVector& w, std::span<const Example> dataset) {
  if (spec.loss != LossKind::kCrossEntropy) {
    throw UnsupportedMetricError("perplexity requires a cross-entropy model");
  }
  return std::exp(loss(spec, w, dataset));
}

double RoundMetrics::rho_mean() const {
  if (rho_per_client.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& [client, rho] : rho_per_client) s += rho;
  return s / static_cast<double>(rho_per_client.size());
}

double RoundMetrics::rho_max_abs_dev() const {
  if (rho_per_client.empty()) return std::numeric_limits<double>::quiet_NaN();
  double dev = 0.0;
  for (const auto& [client, rho] : rho_per_client) dev = std::max(dev, std::fabs(rho - 1.0));
  return dev;
}

}  // namespace fedsumm
