#include "rfggd/params.hpp"

#include <algorithm>

namespace rfggd {

Index ParamVector::size() const { return nominal_size() + (clf_rate ? 1 : 0) + cbf_rates.size(); }

Vec ParamVector::flatten() const {
  Vec out(size());
  if (nominal_input) out.head(nominal_size()) = *nominal_input;
  if (clf_rate) out(clf_index()) = *clf_rate;
  out.segment(cbf_offset(), cbf_rates.size()) = cbf_rates;
  return out;
}

ParamVector ParamVector::with_values(const Vec& flat) const {
  require_dims(flat.size() == size(), "ParamVector: flat vector has wrong size");
  ParamVector out = *this;
  if (out.nominal_input) *out.nominal_input = flat.head(nominal_size());
  if (out.clf_rate) *out.clf_rate = flat(clf_index());
  out.cbf_rates = flat.segment(cbf_offset(), cbf_rates.size());
  return out;
}

ParamVector ParamVector::clipped(const ParamBox& box) const {
  ParamVector out = *this;
  if (out.clf_rate) *out.clf_rate = std::clamp(*out.clf_rate, box.rate_min, box.rate_max);
  out.cbf_rates = out.cbf_rates.cwiseMax(box.rate_min).cwiseMin(box.rate_max);
  return out;
}

bool ParamVector::within(const ParamBox& box) const {
  if (clf_rate && (*clf_rate < box.rate_min || *clf_rate > box.rate_max)) return false;
  if (cbf_rates.size() && (cbf_rates.minCoeff() < box.rate_min || cbf_rates.maxCoeff() > box.rate_max))
    return false;
  return true;
}

}  // namespace rfggd
