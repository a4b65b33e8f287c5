#include "ssde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "ssde/errors.hpp"

namespace ssde {

void EvalCurve::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!(s.rate >= 0.0 && s.rate <= 1.0))
      throw invalid_input("task " + std::to_string(task_id) + ": success rate outside [0, 1]");
    if (i > 0 && s.step <= samples[i - 1].step)
      throw invalid_input("task " + std::to_string(task_id) + ": evaluation steps must increase strictly");
  }
}

void EvalCurve::add(int64_t step, double rate) {
  if (!samples.empty() && step <= samples.back().step)
    throw invalid_input("task " + std::to_string(task_id) + ": evaluation steps must increase strictly");
  if (!(rate >= 0.0 && rate <= 1.0)) throw invalid_input("success rate outside [0, 1]");
  samples.push_back({step, rate});
}

double EvalCurve::at(int64_t t) const {
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](int64_t v, const EvalSample& s) { return v < s.step; });
  if (it == samples.begin())
    throw invalid_input("task " + std::to_string(task_id) + " has no evaluation at or before step " +
                        std::to_string(t));
  return std::prev(it)->rate;
}

double average_performance(const std::vector<EvalCurve>& curves, int64_t t) {
  if (curves.empty()) throw invalid_input("average_performance: no curves");
  double sum = 0.0;
  for (const auto& c : curves) {
    if (c.samples.empty()) throw invalid_input("task " + std::to_string(c.task_id) + " has no samples");
    sum += c.at(t);
  }
  return sum / static_cast<double>(curves.size());
}

double forgetting(const std::vector<EvalCurve>& curves, int64_t delta, int n) {
  if (n < 1 || static_cast<int>(curves.size()) != n) throw invalid_input("forgetting: need one curve per task");
  if (delta < 1) throw invalid_input("forgetting: delta must be >= 1");
  const int64_t end = static_cast<int64_t>(n) * delta;
  double sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto& c = curves[static_cast<std::size_t>(k - 1)];
    if (c.samples.empty() || c.samples.back().step < end)
      throw invalid_input("forgetting: task " + std::to_string(c.task_id) + " is not evaluated at the final step");
    sum += c.at(static_cast<int64_t>(k) * delta) - c.at(end);
  }
  return sum / static_cast<double>(n);
}

double area_under_curve(const EvalCurve& curve, int64_t begin, int64_t end) {
  if (end <= begin) throw invalid_input("area_under_curve: empty interval");
  // Rectangles of the step function; a trapezoid rule on it gives the same sum.
  double area = 0.0;
  int64_t t = begin;
  double value = curve.at(begin);
  for (const auto& s : curve.samples) {
    if (s.step <= begin) continue;
    if (s.step >= end) break;
    area += value * static_cast<double>(s.step - t);
    t = s.step;
    value = s.rate;
  }
  area += value * static_cast<double>(end - t);
  return area / static_cast<double>(end - begin);
}

TransferResult forward_transfer(const EvalCurve& curve, const EvalCurve& baseline, int64_t delta,
                                int64_t window_start) {
  if (delta < 1) throw invalid_input("forward_transfer: delta must be >= 1");
  TransferResult r;
  r.task_id = curve.task_id;
  r.auc = area_under_curve(curve, window_start, window_start + delta);
  r.auc_baseline = area_under_curve(baseline, 0, delta);
  if (r.auc_baseline >= 1.0) {
    r.defined = false;
    r.ft = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.ft = (r.auc - r.auc_baseline) / (1.0 - r.auc_baseline);
  }
  return r;
}

MetricsResult compute_metrics(const std::vector<EvalCurve>& curves, int64_t delta,
                              const std::optional<std::vector<EvalCurve>>& baselines) {
  MetricsResult m;
  m.delta = delta;
  m.tasks = static_cast<int>(curves.size());
  for (const auto& c : curves) c.validate();
  m.P = average_performance(curves, static_cast<int64_t>(m.tasks) * delta);
  m.F = forgetting(curves, delta, m.tasks);
  m.mean_ft = std::numeric_limits<double>::quiet_NaN();
  if (baselines) {
    if (baselines->size() != curves.size()) throw invalid_input("compute_metrics: one baseline per task required");
    double sum = 0.0;
    int defined = 0;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      (*baselines)[k].validate();
      auto r = forward_transfer(curves[k], (*baselines)[k], delta, static_cast<int64_t>(k) * delta);
      if (r.defined) {
        sum += r.ft;
        ++defined;
      }
      m.transfer.push_back(r);
    }
    if (defined > 0) m.mean_ft = sum / defined;
  }
  return m;
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalCurve>& curves) {
  std::vector<std::tuple<int64_t, int, double>> rows;
  for (const auto& c : curves)
    for (const auto& s : c.samples) rows.emplace_back(s.step, c.task_id, s.rate);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b) : std::get<1>(a) < std::get<1>(b);
  });
  std::ofstream os(path);
  if (!os) throw runtime_error("cannot write " + path.string());
  os << "global_step,task_id,success_rate\n" << std::setprecision(17);
  for (const auto& [step, task, rate] : rows) os << step << ',' << task << ',' << rate << '\n';
}

std::vector<EvalCurve> read_eval_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw invalid_input("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("global_step,task_id,success_rate", 0) != 0)
    throw format_error(path.string() + ": missing eval CSV header");
  std::map<int, EvalCurve> by_task;
  std::vector<int> order;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    try {
      const int64_t step = std::stoll(a);
      const int task = std::stoi(b);
      const double rate = std::stod(c);
      auto [it, fresh] = by_task.try_emplace(task);
      if (fresh) {
        it->second.task_id = task;
        order.push_back(task);
      }
      it->second.add(step, rate);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  std::vector<EvalCurve> out;
  for (int t : order) out.push_back(std::move(by_task[t]));
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsResult& m) {
  std::ofstream os(path);
  if (!os) throw runtime_error("cannot write " + path.string());
  os << std::setprecision(17) << "task_id,AUC,AUC_b,FT\n";
  for (const auto& r : m.transfer) os << r.task_id << ',' << r.auc << ',' << r.auc_baseline << ',' << r.ft << '\n';
  os << "# summary\nP,F,mean_FT,delta,tasks\n" << m.P << ',' << m.F << ',' << m.mean_ft << ',' << m.delta << ','
     << m.tasks << '\n';
}

}  // namespace ssde
