#include "stabkit/lp.hpp"

#include "stabkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stabkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense tableau state for the bounded-variable primal simplex.
class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opts) : lp_(lp), opts_(opts) { build(); }

  SolveStatus run();

 private:
  enum class Step { Optimal, Continue, TimedOut };

  void build();
  void compute_reduced_costs(const std::vector<double>& cost);
  Step iterate(const std::vector<double>& cost);
  void pivot(Eigen::Index row, Eigen::Index col);
  void drop_dead_artificials();
  double value_of(Eigen::Index j) const;
  Vector structural_values() const;

  const LinearProgram& lp_;
  SimplexOptions opts_;

  Eigen::Index n_ = 0;  // structural variables
  Eigen::Index m_ = 0;  // rows
  RowMajor tab_;
  Vector beta_;                 // basic values per row
  std::vector<Eigen::Index> basis_;  // column basic in each row
  std::vector<int> row_of_;     // row index if basic, else -1
  std::vector<double> lb_, ub_;
  std::vector<bool> at_upper_;
  std::vector<bool> artificial_;
  std::vector<Eigen::Index> origin_;  // original column id (for Bland ordering)
  Vector d_;                    // reduced costs
  std::size_t iterations_ = 0;
  int degenerate_run_ = 0;
  bool bland_ = false;
};

void Tableau::build() {
  n_ = static_cast<Eigen::Index>(lp_.num_variables());
  m_ = static_cast<Eigen::Index>(lp_.num_constraints());
  const auto& rows = lp_.constraints();

  // Row scaling by the largest coefficient.
  std::vector<double> scale(static_cast<std::size_t>(m_), 1.0);
  for (Eigen::Index i = 0; i < m_; ++i) {
    double mx = 0.0;
    for (const auto& [v, a] : rows[static_cast<std::size_t>(i)].terms) mx = std::max(mx, std::abs(a));
    if (mx > 0.0) scale[static_cast<std::size_t>(i)] = 1.0 / mx;
  }

  lb_.assign(lp_.lower().begin(), lp_.lower().end());
  ub_.assign(lp_.upper().begin(), lp_.upper().end());
  for (std::size_t j = 0; j < ub_.size(); ++j) ub_[j] = std::max(ub_[j], lb_[j]);
  at_upper_.assign(static_cast<std::size_t>(n_), false);
  artificial_.assign(static_cast<std::size_t>(n_), false);

  // Slack bounds and the residual each slack has to absorb.
  std::vector<double> rhs(static_cast<std::size_t>(m_));
  std::vector<double> resid(static_cast<std::size_t>(m_));
  for (Eigen::Index i = 0; i < m_; ++i) {
    const auto& c = rows[static_cast<std::size_t>(i)];
    const double sc = scale[static_cast<std::size_t>(i)];
    double lo = 0.0, hi = 0.0, act = 0.0;
    for (const auto& [v, a] : c.terms) {
      const double as = a * sc;
      lo += as * (as > 0 ? lp_.lower()[v] : lp_.upper()[v]);
      hi += as * (as > 0 ? lp_.upper()[v] : lp_.lower()[v]);
      act += as * lp_.lower()[v];
    }
    const double b = c.rhs * sc;
    rhs[static_cast<std::size_t>(i)] = b;
    resid[static_cast<std::size_t>(i)] = b - act;
    double sl = 0.0, su = 0.0;
    switch (c.relation) {
      case Relation::LessEqual:
        sl = 0.0;
        su = std::max(0.0, b - lo);
        break;
      case Relation::GreaterEqual:
        sl = std::min(0.0, b - hi);
        su = 0.0;
        break;
      case Relation::Equal:
        break;
    }
    lb_.push_back(sl);
    ub_.push_back(su);
    at_upper_.push_back(false);
    artificial_.push_back(false);
  }

  // Artificials for rows whose slack cannot absorb the initial residual.
  std::vector<Eigen::Index> art_row;
  std::vector<double> art_sign;
  for (Eigen::Index i = 0; i < m_; ++i) {
    const auto si = static_cast<std::size_t>(n_ + i);
    const double r = resid[static_cast<std::size_t>(i)];
    if (r < lb_[si] || r > ub_[si]) {
      art_row.push_back(i);
      art_sign.push_back(r > ub_[si] ? 1.0 : -1.0);
    }
  }
  const Eigen::Index n_art = static_cast<Eigen::Index>(art_row.size());
  const Eigen::Index cols = n_ + m_ + n_art;
  for (Eigen::Index a = 0; a < n_art; ++a) {
    lb_.push_back(0.0);
    ub_.push_back(kInf);
    at_upper_.push_back(false);
    artificial_.push_back(true);
  }
  origin_.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j) origin_[static_cast<std::size_t>(j)] = j;

  tab_ = RowMajor::Zero(m_, cols);
  beta_ = Vector::Zero(m_);
  basis_.assign(static_cast<std::size_t>(m_), 0);
  row_of_.assign(static_cast<std::size_t>(cols), -1);
  for (Eigen::Index i = 0; i < m_; ++i) {
    const double sc = scale[static_cast<std::size_t>(i)];
    for (const auto& [v, a] : rows[static_cast<std::size_t>(i)].terms)
      tab_(i, static_cast<Eigen::Index>(v)) += a * sc;
    tab_(i, n_ + i) = 1.0;
  }
  std::vector<bool> has_art(static_cast<std::size_t>(m_), false);
  for (Eigen::Index a = 0; a < n_art; ++a) {
    const Eigen::Index i = art_row[static_cast<std::size_t>(a)];
    const double sgn = art_sign[static_cast<std::size_t>(a)];
    const Eigen::Index col = n_ + m_ + a;
    const auto si = static_cast<std::size_t>(n_ + i);
    const double r = resid[static_cast<std::size_t>(i)];
    // Slack sits at the violated bound; the artificial carries the rest.
    const bool slack_up = r > ub_[si];
    at_upper_[si] = slack_up;
    const double slack_val = slack_up ? ub_[si] : lb_[si];
    tab_(i, col) = sgn;
    tab_.row(i) *= sgn;  // basis column becomes +1
    basis_[static_cast<std::size_t>(i)] = col;
    row_of_[static_cast<std::size_t>(col)] = static_cast<int>(i);
    beta_(i) = std::abs(r - slack_val);
    has_art[static_cast<std::size_t>(i)] = true;
  }
  for (Eigen::Index i = 0; i < m_; ++i) {
    if (has_art[static_cast<std::size_t>(i)]) continue;
    basis_[static_cast<std::size_t>(i)] = n_ + i;
    row_of_[static_cast<std::size_t>(n_ + i)] = static_cast<int>(i);
    beta_(i) = resid[static_cast<std::size_t>(i)];
  }
}

double Tableau::value_of(Eigen::Index j) const {
  const int r = row_of_[static_cast<std::size_t>(j)];
  if (r >= 0) return beta_(r);
  return at_upper_[static_cast<std::size_t>(j)] ? ub_[static_cast<std::size_t>(j)]
                                                : lb_[static_cast<std::size_t>(j)];
}

void Tableau::compute_reduced_costs(const std::vector<double>& cost) {
  const Eigen::Index cols = tab_.cols();
  d_ = Eigen::Map<const Vector>(cost.data(), cols);
  for (Eigen::Index i = 0; i < m_; ++i) {
    const double cb = cost[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
    if (cb != 0.0) d_ -= cb * tab_.row(i).transpose();
  }
}

void Tableau::pivot(Eigen::Index r, Eigen::Index q) {
  const double piv = tab_(r, q);
  tab_.row(r) /= piv;
  tab_(r, q) = 1.0;
  // Sparse update when the pivot row is mostly zero.
  std::vector<Eigen::Index> nz;
  const Eigen::Index cols = tab_.cols();
  for (Eigen::Index j = 0; j < cols; ++j)
    if (tab_(r, j) != 0.0) nz.push_back(j);
  const bool sparse = static_cast<Eigen::Index>(nz.size()) * 3 < cols;
  for (Eigen::Index i = 0; i < m_; ++i) {
    if (i == r) continue;
    const double f = tab_(i, q);
    if (f == 0.0) continue;
    if (sparse) {
      for (Eigen::Index j : nz) tab_(i, j) -= f * tab_(r, j);
    } else {
      tab_.row(i) -= f * tab_.row(r);
    }
    tab_(i, q) = 0.0;
  }
  const double fd = d_(q);
  if (fd != 0.0) {
    if (sparse) {
      for (Eigen::Index j : nz) d_(j) -= fd * tab_(r, j);
    } else {
      d_ -= fd * tab_.row(r).transpose();
    }
    d_(q) = 0.0;
  }
}

Tableau::Step Tableau::iterate(const std::vector<double>& cost) {
  (void)cost;
  const Eigen::Index cols = tab_.cols();
  const double tol = opts_.optimality_tol;

  // Pricing.
  Eigen::Index q = -1;
  double best = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (row_of_[ju] >= 0 || lb_[ju] == ub_[ju]) continue;
    const double dj = d_(j);
    const bool improving = at_upper_[ju] ? dj > tol : dj < -tol;
    if (!improving) continue;
    if (bland_) {
      if (q < 0 || origin_[ju] < origin_[static_cast<std::size_t>(q)]) q = j;
    } else if (std::abs(dj) > best) {
      best = std::abs(dj);
      q = j;
    }
  }
  if (q < 0) return Step::Optimal;

  const auto qu = static_cast<std::size_t>(q);
  const double dir = at_upper_[qu] ? -1.0 : 1.0;
  const double ftol = opts_.feasibility_tol;

  // Ratio test (Harris two-pass outside Bland mode).
  auto limit = [&](Eigen::Index i, double slack) {
    const double t = tab_(i, q);
    if (std::abs(t) <= kPivotTol) return kInf;
    const double delta = -t * dir;
    const auto bu = static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)]);
    if (delta < 0.0) return std::max(0.0, (beta_(i) - lb_[bu] + slack) / -delta);
    if (ub_[bu] == kInf) return kInf;
    return std::max(0.0, (ub_[bu] - beta_(i) + slack) / delta);
  };
  double theta_max = ub_[qu] - lb_[qu];
  Eigen::Index leave = -1;
  if (bland_) {
    double theta = theta_max;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double t = limit(i, 0.0);
      if (t == kInf) continue;
      const bool smaller = t < theta - 1e-12;
      const bool tie = leave >= 0 && std::abs(t - theta) <= 1e-12 &&
                       origin_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] <
                           origin_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(leave)])];
      if (smaller || tie || (leave < 0 && t <= theta)) {
        theta = std::min(theta, t);
        leave = i;
      }
    }
    theta_max = theta;
  } else {
    double relaxed = theta_max;
    for (Eigen::Index i = 0; i < m_; ++i) relaxed = std::min(relaxed, limit(i, ftol));
    double piv = 0.0;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double t = limit(i, 0.0);
      if (t <= relaxed && std::abs(tab_(i, q)) > piv && t < kInf) {
        piv = std::abs(tab_(i, q));
        leave = i;
      }
    }
    if (leave >= 0) {
      const double t = limit(leave, 0.0);
      if (t >= ub_[qu] - lb_[qu]) {
        leave = -1;  // bound flip is at least as short
      } else {
        theta_max = t;
      }
    }
  }
  if (theta_max == kInf) throw NumericalError("simplex: unbounded direction on a bounded LP");

  const double theta = theta_max;
  degenerate_run_ = theta <= 1e-12 ? degenerate_run_ + 1 : 0;
  if (!bland_ && degenerate_run_ > opts_.degenerate_limit) bland_ = true;

  // Move.
  const double entering_value = value_of(q) + dir * theta;
  if (theta != 0.0) beta_ -= (dir * theta) * tab_.col(q);
  if (leave < 0) {
    at_upper_[qu] = !at_upper_[qu];
    return Step::Continue;
  }
  const auto lu = static_cast<std::size_t>(basis_[static_cast<std::size_t>(leave)]);
  const double delta = -tab_(leave, q) * dir;
  at_upper_[lu] = delta > 0.0;
  row_of_[lu] = -1;
  pivot(leave, q);
  basis_[static_cast<std::size_t>(leave)] = q;
  row_of_[qu] = static_cast<int>(leave);
  beta_(leave) = entering_value;
  return Step::Continue;
}

void Tableau::drop_dead_artificials() {
  std::vector<Eigen::Index> keep;
  const Eigen::Index cols = tab_.cols();
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (artificial_[ju] && row_of_[ju] < 0) continue;
    keep.push_back(j);
  }
  if (static_cast<Eigen::Index>(keep.size()) == cols) return;
  RowMajor t(m_, static_cast<Eigen::Index>(keep.size()));
  std::vector<double> lb, ub;
  std::vector<bool> at_up, art;
  std::vector<Eigen::Index> origin;
  std::vector<int> row_of;
  std::vector<Eigen::Index> remap(static_cast<std::size_t>(cols), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index j = keep[k];
    const auto ju = static_cast<std::size_t>(j);
    t.col(static_cast<Eigen::Index>(k)) = tab_.col(j);
    lb.push_back(lb_[ju]);
    ub.push_back(ub_[ju]);
    at_up.push_back(at_upper_[ju]);
    art.push_back(artificial_[ju]);
    origin.push_back(origin_[ju]);
    row_of.push_back(row_of_[ju]);
    remap[ju] = static_cast<Eigen::Index>(k);
  }
  for (auto& b : basis_) b = remap[static_cast<std::size_t>(b)];
  tab_ = std::move(t);
  lb_ = std::move(lb);
  ub_ = std::move(ub);
  at_upper_ = std::move(at_up);
  artificial_ = std::move(art);
  origin_ = std::move(origin);
  row_of_ = std::move(row_of);
}

Vector Tableau::structural_values() const {
  Vector x(n_);
  for (Eigen::Index j = 0; j < n_; ++j) x(j) = value_of(j);
  return x;
}

SolveStatus Tableau::run() {
  SolveStatus out;
  const std::size_t max_iter = 50 * static_cast<std::size_t>(m_ + tab_.cols()) + 1000;
  auto loop = [&](const std::vector<double>& cost) -> Step {
    compute_reduced_costs(cost);
    degenerate_run_ = 0;
    bland_ = false;
    while (true) {
      if (opts_.deadline && (iterations_ & 31) == 0 &&
          std::chrono::steady_clock::now() >= *opts_.deadline)
        return Step::TimedOut;
      if (iterations_ > max_iter) throw NumericalError("simplex: iteration limit exceeded");
      const Step s = iterate(cost);
      if (s == Step::Optimal) return s;
      ++iterations_;
    }
  };

  // Phase 1: drive artificials to zero.
  bool any_art = std::any_of(artificial_.begin(), artificial_.end(), [](bool a) { return a; });
  if (any_art) {
    std::vector<double> cost(static_cast<std::size_t>(tab_.cols()), 0.0);
    for (std::size_t j = 0; j < cost.size(); ++j) cost[j] = artificial_[j] ? 1.0 : 0.0;
    if (loop(cost) == Step::TimedOut) {
      out.kind = SolveStatus::Kind::TimedOut;
      out.iterations = iterations_;
      return out;
    }
    double infeas = 0.0;
    for (std::size_t j = 0; j < artificial_.size(); ++j)
      if (artificial_[j]) infeas = std::max(infeas, value_of(static_cast<Eigen::Index>(j)));
    if (infeas > opts_.feasibility_tol) {
      out.kind = SolveStatus::Kind::Infeasible;
      out.iterations = iterations_;
      return out;
    }
    for (std::size_t j = 0; j < artificial_.size(); ++j) {
      if (!artificial_[j]) continue;
      ub_[j] = 0.0;
      at_upper_[j] = false;
      if (row_of_[j] >= 0) beta_(row_of_[j]) = 0.0;
    }
    drop_dead_artificials();
  }

  // Phase 2.
  const double sgn = lp_.sense == Sense::Maximize ? -1.0 : 1.0;
  std::vector<double> cost(static_cast<std::size_t>(tab_.cols()), 0.0);
  for (Eigen::Index j = 0; j < n_; ++j)
    cost[static_cast<std::size_t>(j)] = sgn * lp_.objective()[static_cast<std::size_t>(j)];
  if (loop(cost) == Step::TimedOut) {
    out.kind = SolveStatus::Kind::TimedOut;
    out.iterations = iterations_;
    return out;
  }

  Vector x = structural_values();
  // Snap onto variable bounds; basic values may carry round-off.
  for (Eigen::Index j = 0; j < n_; ++j)
    x(j) = std::clamp(x(j), lp_.lower()[static_cast<std::size_t>(j)],
                      lp_.upper()[static_cast<std::size_t>(j)]);
  const double viol = lp_.max_violation(x);
  if (viol > 1e-6)
    throw NumericalError("simplex: final basis violates constraints by " + std::to_string(viol));
  out.kind = SolveStatus::Kind::Feasible;
  out.assignment = std::move(x);
  out.objective = lp_.evaluate(out.assignment);
  out.iterations = iterations_;
  return out;
}

}  // namespace

std::size_t LinearProgram::add_variable(double lower, double upper, double objective,
                                        std::string name) {
  lower_.push_back(lower);
  upper_.push_back(upper);
  objective_.push_back(objective);
  if (name.empty()) name = "v" + std::to_string(names_.size());
  names_.push_back(std::move(name));
  return lower_.size() - 1;
}

void LinearProgram::add_constraint(LinearConstraint c) {
  constraints_.push_back(std::move(c));
}

void LinearProgram::validate() const {
  const std::size_t n = num_variables();
  if (objective_.size() != n || upper_.size() != n)
    throw ValidationError("lp: inconsistent variable arrays");
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j]))
      throw ValidationError("lp: variable " + names_[j] + " has a non-finite bound");
    if (!std::isfinite(objective_[j]))
      throw ValidationError("lp: variable " + names_[j] + " has a non-finite cost");
  }
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    const auto& c = constraints_[i];
    if (!std::isfinite(c.rhs)) throw ValidationError("lp: row " + std::to_string(i) + " rhs");
    for (const auto& [v, a] : c.terms) {
      if (v >= n) throw ValidationError("lp: row " + std::to_string(i) + " references unknown variable");
      if (!std::isfinite(a)) throw ValidationError("lp: row " + std::to_string(i) + " coefficient");
    }
  }
}

double LinearProgram::max_violation(const Vector& x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < num_variables(); ++j) {
    const double v = x(static_cast<Eigen::Index>(j));
    worst = std::max({worst, lower_[j] - v, v - upper_[j]});
  }
  for (const auto& c : constraints_) {
    double act = 0.0, mag = 1.0;
    for (const auto& [v, a] : c.terms) {
      act += a * x(static_cast<Eigen::Index>(v));
      mag = std::max(mag, std::abs(a));
    }
    // Measured on the row scaled to unit max coefficient.
    const double r = (act - c.rhs) / mag;
    switch (c.relation) {
      case Relation::LessEqual:
        worst = std::max(worst, r);
        break;
      case Relation::GreaterEqual:
        worst = std::max(worst, -r);
        break;
      case Relation::Equal:
        worst = std::max(worst, std::abs(r));
        break;
    }
  }
  return worst;
}

double LinearProgram::evaluate(const Vector& x) const {
  double v = 0.0;
  for (std::size_t j = 0; j < num_variables(); ++j) v += objective_[j] * x(static_cast<Eigen::Index>(j));
  return v;
}

std::string LinearProgram::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << (sense == Sense::Maximize ? "Maximize" : "Minimize") << "\n obj:";
  for (std::size_t j = 0; j < num_variables(); ++j)
    if (objective_[j] != 0.0) os << (objective_[j] < 0 ? " - " : " + ") << std::abs(objective_[j]) << ' ' << names_[j];
  os << "\nSubject To\n";
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    const auto& c = constraints_[i];
    os << " r" << i << ":";
    for (const auto& [v, a] : c.terms) os << (a < 0 ? " - " : " + ") << std::abs(a) << ' ' << names_[v];
    os << (c.relation == Relation::LessEqual ? " <= " : c.relation == Relation::Equal ? " = " : " >= ")
       << c.rhs << '\n';
  }
  os << "Bounds\n";
  for (std::size_t j = 0; j < num_variables(); ++j)
    os << ' ' << lower_[j] << " <= " << names_[j] << " <= " << upper_[j] << '\n';
  os << "End\n";
  return os.str();
}

std::string_view to_string(SolveStatus::Kind k) {
  switch (k) {
    case SolveStatus::Kind::Feasible:
      return "feasible";
    case SolveStatus::Kind::Infeasible:
      return "infeasible";
    case SolveStatus::Kind::TimedOut:
      break;
  }
  return "timed_out";
}

SolveStatus simplex_solve(const LinearProgram& lp, const SimplexOptions& opts) {
  lp.validate();
  for (std::size_t j = 0; j < lp.num_variables(); ++j)
    if (lp.lower()[j] > lp.upper()[j] + opts.feasibility_tol) return SolveStatus{};
  Tableau t(lp, opts);
  return t.run();
}

}  // namespace stabkit
