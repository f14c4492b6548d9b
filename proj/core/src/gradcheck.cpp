#include "brdro/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "brdro/errors.hpp"

namespace brdro {

// ---- ParamTree ----------------------------------------------------------

void ParamTree::add(std::string name, Eigen::MatrixXd value) {
  if (contains(name)) {
    throw InputError("ParamTree: duplicate entry '" + name + "'");
  }
  if (!value.allFinite()) {
    throw InputError("ParamTree: non-finite value in entry '" + name + "'");
  }
  entries_.push_back(Entry{std::move(name), std::move(value)});
}

bool ParamTree::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamTree::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) {
      return i;
    }
  }
  throw InputError("ParamTree: no entry named '" + std::string(name) + "'");
}

const Eigen::MatrixXd& ParamTree::at(std::string_view name) const {
  return entries_[index_of(name)].value;
}

Eigen::Ref<Eigen::MatrixXd> ParamTree::at(std::string_view name) {
  return entries_[index_of(name)].value;
}

Eigen::Index ParamTree::total_size() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_) {
    n += e.value.size();
  }
  return n;
}

std::pair<std::size_t, Eigen::Index> ParamTree::locate(Eigen::Index index) const {
  Eigen::Index offset = index;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (offset < entries_[i].value.size()) {
      return {i, offset};
    }
    offset -= entries_[i].value.size();
  }
  throw InputError("ParamTree: flat index " + std::to_string(index) + " out of range");
}

double ParamTree::flat(Eigen::Index index) const {
  const auto [entry, offset] = locate(index);
  return entries_[entry].value.data()[offset];
}

double& ParamTree::flat(Eigen::Index index) {
  const auto [entry, offset] = locate(index);
  return entries_[entry].value.data()[offset];
}

ParamTree ParamTree::zeros_like() const {
  ParamTree out;
  for (const auto& e : entries_) {
    out.add(e.name, Eigen::MatrixXd::Zero(e.value.rows(), e.value.cols()));
  }
  return out;
}

bool ParamTree::same_layout(const ParamTree& other) const {
  if (entries_.size() != other.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
      return false;
    }
  }
  return true;
}

bool ParamTree::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Entry& e) { return e.value.allFinite(); });
}

bool operator==(const ParamTree& a, const ParamTree& b) {
  if (!a.same_layout(b)) {
    return false;
  }
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].value != b.entries_[i].value) {
      return false;
    }
  }
  return true;
}

// ---- finite differences -------------------------------------------------

ParamTree finite_diff_grad(const ScalarFn& f, const ParamTree& params, double eps) {
  if (!(eps > 0.0)) {
    throw InputError("finite_diff_grad: eps must be positive");
  }
  ParamTree grad = params.zeros_like();
  ParamTree probe = params;
  const Eigen::Index n = params.total_size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x0 = params.flat(i);
    probe.flat(i) = x0 + eps;
    const double up = f(probe);
    probe.flat(i) = x0 - eps;
    const double down = f(probe);
    probe.flat(i) = x0;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      const auto [entry, offset] = params.locate(i);
      throw OracleError("finite_diff_grad: non-finite evaluation at entry '" +
                        params.entries()[entry].name + "' offset " + std::to_string(offset));
    }
    const long double diff = static_cast<long double>(up) - static_cast<long double>(down);
    grad.flat(i) = static_cast<double>(diff / (2.0L * static_cast<long double>(eps)));
  }
  return grad;
}

// ---- grad check ---------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double GradCheckReport::entry_error(const std::string& name) const {
  for (const auto& [entry, err] : entry_max_rel_error) {
    if (entry == name) {
      return err;
    }
  }
  throw InputError("GradCheckReport: no entry named '" + name + "'");
}

GradCheckReport grad_check(const GradBundle& bundle, const ParamTree& params, Rng& rng,
                           const GradCheckOptions& options) {
  if (!bundle.value || !bundle.gradient) {
    throw UsageError("grad_check: bundle '" + bundle.name + "' lacks a value or gradient");
  }
  GradCheckReport report;
  report.bundle = bundle.name;
  for (const auto& e : params.entries()) {
    report.entry_max_rel_error.emplace_back(e.name, 0.0);
  }

  std::normal_distribution<double> jitter(0.0, options.probe_scale);
  for (int p = 0; p < options.probes; ++p) {
    ParamTree point = params;
    for (Eigen::Index i = 0; i < point.total_size(); ++i) {
      point.flat(i) += jitter(rng);
    }
    const ParamTree analytic = bundle.gradient(point);
    if (!analytic.same_layout(point)) {
      throw UsageError("grad_check: bundle '" + bundle.name + "' returned a mismatched gradient");
    }
    const ParamTree numeric = finite_diff_grad(bundle.value, point, options.eps);
    for (Eigen::Index i = 0; i < point.total_size(); ++i) {
      const double err = relative_error(analytic.flat(i), numeric.flat(i), options.denominator_floor);
      auto& slot = report.entry_max_rel_error[point.locate(i).first].second;
      slot = std::max(slot, err);
    }
    ++report.probe_count;
  }
  for (const auto& [name, err] : report.entry_max_rel_error) {
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

GradCheckReport grad_check(const GradBundle& bundle, Rng& rng, const GradCheckOptions& options) {
  return grad_check(bundle, bundle.params, rng, options);
}

}  // namespace brdro
