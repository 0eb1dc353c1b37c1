#pragma once

#include "rfggd/common.hpp"

#include <optional>

namespace rfggd {

/// Box applied to every rate after each update.
struct ParamBox {
  double rate_min = 1e-3;
  double rate_max = 5.0;
};

/// Adaptable controller parameters. Flattened order is
/// [nominal_input..., clf_rate, cbf_rates...], with absent blocks skipped.
struct ParamVector {
  std::optional<double> clf_rate;
  Vec cbf_rates;
  std::optional<Vec> nominal_input;

  Index size() const;
  Index nominal_offset() const { return 0; }
  Index nominal_size() const { return nominal_input ? nominal_input->size() : 0; }
  /// Flat index of the CLF rate, or -1.
  Index clf_index() const { return clf_rate ? nominal_size() : -1; }
  Index cbf_offset() const { return nominal_size() + (clf_rate ? 1 : 0); }

  Vec flatten() const;
  /// Same layout as *this, values taken from `flat`.
  ParamVector with_values(const Vec& flat) const;
  ParamVector clipped(const ParamBox& box) const;
  bool within(const ParamBox& box) const;
};

}  // namespace rfggd
