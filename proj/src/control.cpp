#include "ptgrad/control.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>

#include "ptgrad/kernels.hpp"

namespace ptgrad {

namespace {

// w(v,i) = sum_{m,o} lambda(m,o) node[o,i,m,v]; lambda is l x chi_out,
// w is l x chi_in, both column-major.
Mat pull_back(const PtNode& node, const Mat& lambda, int l) {
  Mat w(l, node.chi_in);
  if (node.kind == PtNode::Kind::Dense)
    kernels::backward_dense(node.data->data(), node.chi_out, node.chi_in, l,
                            lambda.data(), w.data());
  else
    kernels::backward_bonddiag(node.data->data(), node.chi_out, l,
                               lambda.data(), w.data());
  return w;
}

double fd_increment(double base, double value) {
  return base * std::max(1.0, std::abs(value));
}

}  // namespace

double terminal_cost(const DensityVec& rho_t, const DensityVec& target) {
  require(rho_t.data.size() == target.data.size(),
          "terminal_cost: dimension mismatch");
  return 1.0 - target.data.dot(rho_t.data).real();
}

Costate terminal_costate(const DensityVec& target) {
  Costate lam;
  lam.data = -target.data.conjugate();
  lam.step = 0;  // reassigned by backpropagate
  return lam;
}

std::vector<Costate> backpropagate(const ProcessTensor& pt,
                                   const std::vector<SuperOp>& props,
                                   const Costate& lambda_t) {
  pt.validate();
  const int l = pt.ldim();
  const int t_steps = pt.steps();
  require(static_cast<int>(props.size()) == t_steps,
          "backpropagate: need one propagator per step");
  require(lambda_t.data.rows() == l && lambda_t.data.cols() == 1,
          "backpropagate: terminal costate must be l x 1");

  std::vector<Costate> out(t_steps + 1);
  out[t_steps] = Costate{lambda_t.data, t_steps};
  for (int k = t_steps; k >= 1; --k) {
    const PtNode& node = pt.nodes[k - 1];
    Mat w = pull_back(node, out[k].data, l);
    if (!w.allFinite())
      throw numerical_error("backpropagate: non-finite costate at step " +
                            std::to_string(k));
    out[k - 1] = Costate{props[k - 1].transpose() * w, k - 1};
  }
  return out;
}

std::vector<Mat> gradient_wrt_propagators(const std::vector<Mat>& states,
                                          const std::vector<Costate>& costates,
                                          const ProcessTensor& pt) {
  pt.validate();
  const int l = pt.ldim();
  const int t_steps = pt.steps();
  require(static_cast<int>(states.size()) == t_steps + 1,
          "gradient_wrt_propagators: need T+1 forward states");
  require(static_cast<int>(costates.size()) == t_steps + 1,
          "gradient_wrt_propagators: need T+1 costates");

  std::vector<Mat> grads;
  grads.reserve(t_steps);
  for (int q = 1; q <= t_steps; ++q) {
    const PtNode& node = pt.nodes[q - 1];
    const Mat& sigma = states[q - 1];
    require(sigma.rows() == l && sigma.cols() == node.chi_in,
            "gradient_wrt_propagators: state shape mismatch");
    require(costates[q].data.rows() == l &&
                costates[q].data.cols() == node.chi_out,
            "gradient_wrt_propagators: costate shape mismatch");
    Mat w = pull_back(node, costates[q].data, l);
    Mat g(l, l);
    kernels::gradient_outer(sigma.data(), w.data(), l, node.chi_in, g.data());
    grads.push_back(std::move(g));
  }
  return grads;
}

RMat gradient_wrt_controls(const std::vector<Mat>& prop_grads,
                           const HBuilder& h_builder,
                           const ControlSchedule& schedule, double fd_step) {
  schedule.validate();
  const int t_steps = schedule.steps();
  const int m_ch = schedule.channels();
  require(static_cast<int>(prop_grads.size()) == t_steps,
          "gradient_wrt_controls: need one propagator gradient per step");
  require(fd_step > 0, "gradient_wrt_controls: fd_step must be positive");

  RMat dz(t_steps, m_ch);
  std::vector<double> row(m_ch);
  for (int q = 0; q < t_steps; ++q) {
    for (int m = 0; m < m_ch; ++m) row[m] = schedule.values(q, m);
    for (int m = 0; m < m_ch; ++m) {
      const double h = fd_increment(fd_step, row[m]);
      const double saved = row[m];
      row[m] = saved + h;
      SuperOp up = step_propagator(
          hamiltonian_superop(QOperator(h_builder(row))), schedule.dt);
      row[m] = saved - h;
      SuperOp dn = step_propagator(
          hamiltonian_superop(QOperator(h_builder(row))), schedule.dt);
      row[m] = saved;
      Mat du = (up - dn) / (2.0 * h);
      dz(q, m) = (prop_grads[q] * du).trace().real();
    }
  }
  return dz;
}

OptimizeResult optimize(const ProcessTensor& pt, const HBuilder& h_builder,
                        const ControlSchedule& schedule0,
                        const DensityVec& target, const DensityVec& rho0,
                        int max_iters, const OptimizeOptions& options) {
  pt.validate();
  schedule0.validate();
  require(schedule0.steps() == pt.steps(),
          "optimize: schedule and process tensor step counts differ");
  require(schedule0.dt > 0, "optimize: schedule dt must be positive");
  require(std::abs(schedule0.dt - pt.dt) <= 1e-12 * std::max(1.0, pt.dt),
          "optimize: schedule dt differs from process tensor dt");
  require(max_iters >= 1, "optimize: max_iters must be >= 1");

  const int t_steps = schedule0.steps();
  const int m_ch = schedule0.channels();

  double scale = 1.0;
  if (!schedule0.lower.empty() && !schedule0.upper.empty()) {
    for (int m = 0; m < m_ch; ++m)
      scale = std::max(scale, schedule0.upper[m] - schedule0.lower[m]);
  } else if (schedule0.values.size() > 0) {
    scale = std::max(scale, schedule0.values.cwiseAbs().maxCoeff());
  }
  const double lr = options.lr_scale * scale;

  ControlSchedule schedule = schedule0;
  OptimizeResult res;
  res.schedule = schedule0;
  res.cost = std::numeric_limits<double>::infinity();

  RMat m1 = RMat::Zero(t_steps, m_ch);
  RMat m2 = RMat::Zero(t_steps, m_ch);
  double prev_cost = std::numeric_limits<double>::infinity();
  int increase_streak = 0;

  Costate lam_t = terminal_costate(target);
  for (int it = 0; it < max_iters; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SuperOp> props =
        system_propagators(h_builder, schedule, schedule.dt);
    ForwardResult fwd = contract_forward(pt, props, rho0);
    const double cost = terminal_cost(fwd.final, target);

    std::vector<Costate> costates = backpropagate(pt, props, lam_t);
    std::vector<Mat> pgrads =
        gradient_wrt_propagators(fwd.states, costates, pt);
    RMat grad =
        gradient_wrt_controls(pgrads, h_builder, schedule, options.fd_step);
    const double grad_norm = grad.norm();

    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    res.history.push_back(HistoryRow{it, cost, grad_norm, wall_ms});

    if (cost < res.cost) {
      res.cost = cost;
      res.schedule = schedule;
    }
    if (cost > prev_cost) {
      if (++increase_streak >= options.abort_after_increases)
        throw numerical_error(
            "optimize: cost increased for " +
            std::to_string(increase_streak) +
            " consecutive iterations (iteration " + std::to_string(it) +
            ", cost " + std::to_string(cost) + ", grad_norm " +
            std::to_string(grad_norm) + "); reduce the learning rate");
    } else {
      increase_streak = 0;
    }
    prev_cost = cost;

    if (cost < options.cost_tol || grad_norm < options.grad_tol) break;
    if (it + 1 == max_iters) break;

    const double bc1 = 1.0 - std::pow(options.beta1, it + 1);
    const double bc2 = 1.0 - std::pow(options.beta2, it + 1);
    m1 = options.beta1 * m1 + (1.0 - options.beta1) * grad;
    m2 = options.beta2 * m2 + (1.0 - options.beta2) * grad.cwiseProduct(grad);
    RMat step = (m1 / bc1).cwiseQuotient(
        (m2 / bc2).cwiseSqrt() + RMat::Constant(t_steps, m_ch, 1e-8));
    schedule.values -= lr * step;
    for (int m = 0; m < m_ch; ++m) {
      if (!schedule.lower.empty())
        schedule.values.col(m) =
            schedule.values.col(m).cwiseMax(schedule.lower[m]);
      if (!schedule.upper.empty())
        schedule.values.col(m) =
            schedule.values.col(m).cwiseMin(schedule.upper[m]);
    }
  }
  return res;
}

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("write_history_csv: cannot open " + path);
  out << "iteration,cost,grad_norm,wall_ms\n";
  char buf[160];
  for (const HistoryRow& row : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.6g\n", row.iteration,
                  row.cost, row.grad_norm, row.wall_ms);
    out << buf;
  }
  if (!out.good()) throw io_error("write_history_csv: write failed: " + path);
}

}  // namespace ptgrad
