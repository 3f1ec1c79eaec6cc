#include "dsol/photometric.hpp"

#include <algorithm>

namespace dsol {

PatchVerdict reject_patch(std::span<const double, kPatchSize> residuals,
                          std::span<const double, kPatchSize> host_grad2,
                          std::span<const bool, kPatchSize> in_view) {
  PatchVerdict v;
  for (int k = 0; k < kPatchSize; ++k) {
    if (!in_view[k]) continue;
    ++v.num_valid;
    const bool bad = residuals[k] * residuals[k] > host_grad2[k];
    v.num_bad += bad;
    v.use[k] = !bad;
  }
  v.rejected = v.num_bad >= 2;
  v.discard = v.rejected || v.num_valid < kMinPatchPixelsInView;
  if (v.discard) v.use.fill(false);
  return v;
}

PatchVerdict reject_patch(std::span<const double, kPatchSize> residuals,
                          std::span<const double, kPatchSize> host_grad2) {
  constexpr std::array<bool, kPatchSize> all{true, true, true, true, true};
  return reject_patch(residuals, host_grad2, all);
}

double MadSigma(std::span<double> abs_residuals, double min_sigma) {
  if (abs_residuals.empty()) return min_sigma;
  const auto mid = abs_residuals.begin() + static_cast<std::ptrdiff_t>(abs_residuals.size() / 2);
  std::nth_element(abs_residuals.begin(), mid, abs_residuals.end());
  return std::max(1.4826 * *mid, min_sigma);
}

}  // namespace dsol
