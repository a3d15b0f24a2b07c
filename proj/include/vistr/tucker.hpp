#pragma once

#include <optional>
#include <vector>

#include "vistr/tensor.hpp"

namespace vistr {

/// Tucker factorization: core tensor plus per-mode column-orthonormal factors.
struct TuckerFactors {
  DenseTensor core;             // extents R_1..R_N
  std::vector<Matrix> factors;  // factor n is I_n x R_n
  std::vector<double> energy;   // retained Frobenius-energy fraction per mode
  bool degenerate = false;      // all-zero input collapsed to a rank-1 zero factorization
};

/// Per-mode compression request: an explicit rank, an energy target in (0,1],
/// or full rank when neither is given.
struct ModeSpec {
  std::optional<std::size_t> rank;
  std::optional<double> energy;

  static ModeSpec full() { return {}; }
  static ModeSpec of_rank(std::size_t r) { return {r, std::nullopt}; }
  static ModeSpec of_energy(double tau) { return {std::nullopt, tau}; }
};

/// HOSVD: factors are leading left singular vectors of each mode unfolding,
/// sign-fixed so the largest-magnitude entry of each column is positive;
/// core = x multiplied by factor transposes on every mode.
TuckerFactors hosvd(const DenseTensor& x, const std::vector<ModeSpec>& spec);

/// Convenience overloads: one rank / one energy target per mode.
TuckerFactors hosvd_ranks(const DenseTensor& x, const std::vector<std::size_t>& ranks);
TuckerFactors hosvd_energy(const DenseTensor& x, double tau);

DenseTensor tucker_reconstruct(const TuckerFactors& f);

}  // namespace vistr
