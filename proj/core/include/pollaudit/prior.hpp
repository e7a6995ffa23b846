#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace pollaudit {

// A tally x is winning for the announced winner iff x > N/2 (ties lose).
constexpr bool is_winning_tally(std::int64_t ballots, std::int64_t tally) {
  return 2 * tally > ballots;
}
// Largest losing tally: the tie for even N, margin one for odd N.
constexpr std::int64_t hardest_losing_tally(std::int64_t ballots) { return ballots / 2; }
constexpr std::int64_t smallest_winning_tally(std::int64_t ballots) { return ballots / 2 + 1; }

enum class BetaDiscretization {
  kPointwise,     // density evaluated at x/N on {1..N-1}, endpoints excluded
  kBetaBinomial,  // beta-binomial pmf with the same pseudo-counts
};

// Discrete distribution over the announced winner's true tally x in {0..N}.
// Immutable after construction.
class Prior {
 public:
  // Normalizes `weights` (non-negative, positive total). Throws
  // PreconditionError on size mismatch, negative or non-finite weights.
  static Prior from_weights(std::int64_t ballots, std::vector<double> weights,
                            nlohmann::json descriptor = nullptr);
  // Same, with weights given as natural logs (-inf for zero).
  static Prior from_log_weights(std::int64_t ballots, std::vector<double> log_weights,
                                nlohmann::json descriptor = nullptr);

  std::int64_t ballots() const { return ballots_; }
  std::span<const double> mass() const { return mass_; }
  double mass(std::int64_t x) const { return mass_[static_cast<std::size_t>(x)]; }
  double log_mass(std::int64_t x) const { return log_mass_[static_cast<std::size_t>(x)]; }
  double winner_mass() const { return winner_mass_; }
  double loser_mass() const { return loser_mass_; }

  // Named construction recipe ({"N", "family", "params"}) when the prior came
  // from a named constructor; null for priors built from raw weights.
  const nlohmann::json& descriptor() const { return descriptor_; }

 private:
  Prior() = default;
  void finish();

  std::int64_t ballots_ = 0;
  std::vector<double> mass_;
  std::vector<double> log_mass_;
  double winner_mass_ = 0.0;
  double loser_mass_ = 0.0;
  nlohmann::json descriptor_;
};

// Mass 1/2 on losing tally x0 and 1/2 on winning tally x1.
Prior two_point(std::int64_t ballots, std::int64_t losing_tally, std::int64_t winning_tally);

// Discretized Beta(a, b) shape over x/N.
Prior beta_shape(std::int64_t ballots, double a, double b,
                 BetaDiscretization discretization = BetaDiscretization::kPointwise);

// Equal mass on every winning tally {floor(N/2)+1 .. N}.
Prior uniform_winning(std::int64_t ballots);

// Equal mass on every tally {0 .. N}.
Prior uniform_tallies(std::int64_t ballots);

// Rescales the winning and losing halves to 1/2 each. Throws if either half
// carries no mass.
Prior equal_halves(const Prior& prior);

// Risk-maximizing transform: the winning shape rescaled to total 1/2 and
// mass 1/2 on the hardest losing tally. Idempotent.
Prior rla_transform(const Prior& prior);

inline double winner_mass(const Prior& prior) { return prior.winner_mass(); }

// {"N": int, "mass": [...]} or the named form, whichever the prior carries;
// `force_mass` always emits the explicit mass array.
nlohmann::json prior_to_json(const Prior& prior, bool force_mass = false);
Prior prior_from_json(const nlohmann::json& j);

}  // namespace pollaudit
