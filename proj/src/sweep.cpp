#include "astra/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace astra::eval {

std::vector<rules::RuleSpec> sample_rule_subset(
    const std::vector<rules::RuleSpec>& all, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw_usage("sweep: fractions must lie in (0, 1]");
  const size_t take = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(all.size())));
  if (take == 0)
    throw_data("sweep: fraction " + std::to_string(fraction) +
               " selects zero rules");
  std::vector<size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  rng.shuffle(idx);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());  // keep original rule order within subset
  std::vector<rules::RuleSpec> out;
  for (size_t i : idx) out.push_back(all[i]);
  return out;
}

SweepResult sparsity_sweep(const corpus::DatasetBundle& bundle,
                           const corpus::LabelSpace& labels,
                           const std::vector<rules::RuleSpec>& rule_specs,
                           const std::vector<double>& fractions, int repeats,
                           const selftrain::TrainConfig& cfg, int jobs) {
  if (repeats < 1) throw_usage("sweep: repeats must be >= 1");
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0)
      throw_usage("sweep: fractions must lie in (0, 1]");
  }

  struct Point {
    size_t fi;
    int repeat;
    SweepRow majority;
    SweepRow astra;
  };
  std::vector<Point> points;
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    for (int r = 0; r < repeats; ++r) points.push_back({fi, r, {}, {}});
  }

  auto run_point = [&](Point& pt) {
    const double fraction = fractions[pt.fi];
    Rng subset_rng(mix_seed(cfg.seed, 0x5A3F + pt.fi * 131,
                            static_cast<uint64_t>(pt.repeat)));
    auto subset = sample_rule_subset(rule_specs, fraction, subset_rng);
    std::vector<rules::CompiledRule> compiled;
    for (const auto& spec : subset)
      compiled.push_back(rules::compile_rule(spec, labels));

    selftrain::TrainConfig run_cfg = cfg;
    run_cfg.seed = mix_seed(cfg.seed, 0xF00 + pt.fi,
                            static_cast<uint64_t>(pt.repeat));

    auto mj = selftrain::run_majority(bundle, labels, compiled, run_cfg);
    pt.majority = {fraction, "majority", run_cfg.seed, cfg.metric,
                   mj.metrics.final_test.value_or(0.0)};
    auto as = selftrain::run_astra(bundle, labels, compiled, run_cfg);
    pt.astra = {fraction, "astra", run_cfg.seed, cfg.metric,
                as.metrics.final_test.value_or(0.0)};
  };

  if (jobs <= 1 || points.size() <= 1) {
    for (auto& pt : points) run_point(pt);
  } else {
    std::atomic<size_t> next{0};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mu;
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= points.size()) return;
        try {
          run_point(points[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    const size_t n_threads = std::min<size_t>(static_cast<size_t>(jobs), points.size());
    for (size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  SweepResult result;
  for (const auto& pt : points) {
    result.rows.push_back(pt.majority);
    result.rows.push_back(pt.astra);
  }
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    for (const std::string method : {"majority", "astra"}) {
      std::vector<double> vals;
      for (const auto& row : result.rows) {
        if (row.fraction == fractions[fi] && row.method == method)
          vals.push_back(row.value);
      }
      result.summaries.push_back(
          {fractions[fi], method,
           MetricReport::from_values(cfg.metric, std::move(vals))});
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "fraction,method,seed,metric,value\n";
  out.precision(17);
  for (const auto& row : result.rows) {
    out << row.fraction << ',' << row.method << ',' << row.seed << ','
        << row.metric << ',' << row.value << '\n';
  }
  return out.str();
}

}  // namespace astra::eval
