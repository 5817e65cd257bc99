// Command-line harness for the block-sparse prefill attention pipeline:
// generate workloads, discover block-level attention patterns, select active
// blocks, evaluate sparse attention against the dense oracle, and sweep
// parameters into machine-readable reports.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsattn/attention.hpp"
#include "bsattn/discovery.hpp"
#include "bsattn/metrics.hpp"
#include "bsattn/report.hpp"
#include "bsattn/selection.hpp"
#include "bsattn/tensor.hpp"
#include "bsattn/workloads.hpp"

namespace {

using namespace bsattn;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Timer {
public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Shared flag bundles
// ---------------------------------------------------------------------------

struct CommonFlags {
  PipelineConfig config;
  std::string format = "json";
  std::string out;
};

struct WorkloadFlags {
  std::string pattern;
  std::uint64_t Z = 1, H = 1, L = 2048, d = 64;
  float strength = 2.5f;
  float noise = 0.5f;
  std::string target;  // "a" or "a,b"; empty picks a pattern-dependent default
  float head_mass = 0.7f;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--block-size,-B,--B", flags.config.block_size, "tokens per block")
      ->capture_default_str();
  cmd->add_option("--alpha", flags.config.alpha, "max-threshold scaling factor")
      ->capture_default_str();
  cmd->add_option("--sink-tokens", flags.config.sink_tokens, "always-kept leading tokens")
      ->capture_default_str();
  cmd->add_option("--window-tokens", flags.config.window_tokens, "always-kept trailing tokens")
      ->capture_default_str();
  cmd->add_option("--scale", flags.config.scale, "softmax temperature; <=0 means d^(-1/2)")
      ->capture_default_str();
  cmd->add_option("--seed", flags.config.rng_seed, "rng seed")->capture_default_str();
  cmd->add_option("--format", flags.format, "report format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  cmd->add_option("--out", flags.out, "output path prefix");
}

void add_workload_flags(CLI::App* cmd, WorkloadFlags& flags, bool allow_heavy_tail) {
  std::vector<std::string> kinds = {"vertical", "slash", "block", "needle", "alt-slash"};
  if (allow_heavy_tail) kinds.push_back("heavy-tail");
  cmd->add_option("--gen", flags.pattern, "generate a synthetic workload")
      ->check(CLI::IsMember(kinds));
  cmd->add_option("--L", flags.L, "sequence length")->capture_default_str();
  cmd->add_option("--Z", flags.Z, "batch size")->capture_default_str();
  cmd->add_option("--H", flags.H, "heads")->capture_default_str();
  cmd->add_option("--d", flags.d, "head dimension")->capture_default_str();
  cmd->add_option("--strength", flags.strength, "planted logit boost (scaled units)")
      ->capture_default_str();
  cmd->add_option("--noise", flags.noise, "background noise stddev")->capture_default_str();
  cmd->add_option("--target", flags.target,
                  "pattern target: block index / offset tokens / 'row,col' / token index");
  cmd->add_option("--head-mass", flags.head_mass, "heavy-tail head mass")->capture_default_str();
}

std::pair<std::int64_t, std::int64_t> parse_target(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) return {std::stoll(text), 0};
  return {std::stoll(text.substr(0, comma)), std::stoll(text.substr(comma + 1))};
}

PlantedSpec planted_spec(const WorkloadFlags& flags, const PipelineConfig& config,
                         std::uint64_t seq_len) {
  PlantedSpec spec;
  spec.strength = flags.strength;
  spec.base_noise = flags.noise;
  spec.rng_seed = config.rng_seed;
  const std::uint32_t blocks = make_block_grid(seq_len, config.block_size).num_query_blocks;
  if (flags.pattern == "vertical") {
    spec.pattern_kind = PatternKind::kVertical;
    spec.target_a = flags.target.empty() ? blocks / 4 : parse_target(flags.target).first;
  } else if (flags.pattern == "slash" || flags.pattern == "alt-slash") {
    spec.pattern_kind = PatternKind::kSlash;
    spec.target_a = flags.target.empty() ? 2 * static_cast<std::int64_t>(config.block_size)
                                         : parse_target(flags.target).first;
  } else if (flags.pattern == "block") {
    spec.pattern_kind = PatternKind::kBlock;
    if (flags.target.empty()) {
      spec.target_a = blocks / 2;
      spec.target_b = blocks / 4;
    } else {
      const auto [a, b] = parse_target(flags.target);
      spec.target_a = a;
      spec.target_b = b;
    }
  } else if (flags.pattern == "needle") {
    spec.pattern_kind = PatternKind::kNeedle;
    spec.target_a =
        flags.target.empty() ? static_cast<std::int64_t>(seq_len / 3) : parse_target(flags.target).first;
  } else {
    throw UsageError("pattern '" + flags.pattern + "' cannot generate q/k/v tensors");
  }
  return spec;
}

PlantedWorkload build_workload(const WorkloadFlags& flags, const PipelineConfig& config,
                               std::uint64_t seq_len) {
  const PlantedSpec spec = planted_spec(flags, config, seq_len);
  const float tau = config.resolved_scale(flags.d);
  if (flags.pattern == "alt-slash")
    return generate_alternating_slash(spec, flags.Z, flags.H, seq_len, flags.d,
                                      config.block_size, tau);
  return generate_planted(spec, flags.Z, flags.H, seq_len, flags.d, config.block_size, tau);
}

// ---------------------------------------------------------------------------
// Report plumbing
// ---------------------------------------------------------------------------

void emit_report(const json& report, const CommonFlags& flags, const char* suffix) {
  const std::string text =
      flags.format == "csv" ? report_to_csv(report) : report.dump(2) + "\n";
  std::cout << text;
  if (!flags.out.empty()) {
    const std::string path =
        flags.out + suffix + (flags.format == "csv" ? ".csv" : ".json");
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot open for writing: " + path);
    file << text;
    if (!file.flush()) throw IoError("write failed: " + path);
  }
}

json base_report(const char* command, const CommonFlags& flags) {
  json report;
  report["command"] = command;
  report["config"] = config_echo(flags.config);
  report["config_hash"] = config_hash(flags.config);
  report["timings_ms"] = json::object();
  report["metrics"] = json::object();
  return report;
}

json shape_echo(const SequenceBatch& batch) {
  return json{{"Z", batch.batch()},
              {"H", batch.heads()},
              {"L", batch.seq_len()},
              {"d", batch.head_dim()}};
}

// ---------------------------------------------------------------------------
// Tensor plumbing
// ---------------------------------------------------------------------------

SequenceBatch load_batch(const std::string& path, Role role) {
  return make_sequence_batch(load_tensor<float>(path), role);
}

Tensor<std::int32_t> mask_to_i32(const ActiveMask& mask) {
  Tensor<std::int32_t> t(mask.active.shape(), 0);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<std::int32_t>(mask.active.data()[i]);
  return t;
}

void save_plan(const SparseBlockPlan& plan, const std::string& prefix) {
  save_tensor(plan.indices, prefix + ".idx.fpt");
  save_tensor(plan.counts, prefix + ".cnt.fpt");
}

SparseBlockPlan load_plan(const std::string& prefix) {
  SparseBlockPlan plan{load_tensor<std::int32_t>(prefix + ".idx.fpt"),
                       load_tensor<std::int32_t>(prefix + ".cnt.fpt")};
  if (plan.indices.ndim() != 4 || plan.counts.ndim() != 3)
    throw ValidationError("plan tensors must be Z x M x N x H and Z x M x H");
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t idx_axis = a == 2 ? 3 : a;
    if (plan.indices.dim(idx_axis) != plan.counts.dim(a))
      throw ValidationError("plan index/count shapes disagree");
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Pipeline stages shared by attend and sweep
// ---------------------------------------------------------------------------

struct SelectorChoice {
  std::string method = "max";  // max | topk | topp
  std::uint32_t k = 8;
  float p = 0.9f;
};

BlockScoreMap run_discover(const std::string& method, const SequenceBatch& q,
                           const SequenceBatch& k, const BlockGrid& grid, float tau,
                           float epsilon) {
  if (method == "pool-both") return discover_pool_both(q, k, grid, tau, epsilon);
  if (method == "exact") return discover_exact(q, k, grid, tau, epsilon);
  return discover(q, k, grid, tau, epsilon);
}

ActiveMask run_selector(const SelectorChoice& choice, const Tensor<float>& score,
                        const PipelineConfig& config, SelectionStats* stats = nullptr) {
  if (choice.method == "topk") return topk_select(score, choice.k, config);
  if (choice.method == "topp") return topp_select(score, choice.p, config);
  return max_threshold_mask(score, config, stats);
}

// ---------------------------------------------------------------------------
// Subcommand handlers
// ---------------------------------------------------------------------------

int cmd_gen(const CommonFlags& common, const WorkloadFlags& workload) {
  if (workload.pattern.empty()) throw UsageError("gen requires --gen <pattern>");
  if (common.out.empty()) throw UsageError("gen requires --out <prefix>");
  common.config.validate();

  Timer timer;
  const PlantedWorkload w = build_workload(workload, common.config, workload.L);
  const double gen_ms = timer.ms();

  save_tensor(w.q.data, common.out + ".q.fpt");
  save_tensor(w.k.data, common.out + ".k.fpt");
  save_tensor(w.v.data, common.out + ".v.fpt");
  save_tensor(mask_to_i32(w.ground_truth), common.out + ".gt.fpt");

  CommonFlags flags = common;
  json report = base_report("gen", flags);
  report["workload"] = json{{"pattern", workload.pattern},
                            {"strength", workload.strength},
                            {"noise", workload.noise}};
  report["shape"] = shape_echo(w.q);
  report["timings_ms"]["generate"] = gen_ms;
  report["outputs"] = json{{"q", common.out + ".q.fpt"},
                           {"k", common.out + ".k.fpt"},
                           {"v", common.out + ".v.fpt"},
                           {"gt", common.out + ".gt.fpt"}};
  emit_report(report, flags, ".report");
  return 0;
}

int cmd_discover(const CommonFlags& common, const WorkloadFlags& workload,
                 const std::string& method, const std::string& q_path,
                 const std::string& k_path, bool compare_exact) {
  common.config.validate();

  json report = base_report("discover", common);
  report["method"] = method;

  SequenceBatch q, k;
  std::optional<ActiveMask> gt;
  if (!workload.pattern.empty()) {
    Timer timer;
    PlantedWorkload w = build_workload(workload, common.config, workload.L);
    report["timings_ms"]["generate"] = timer.ms();
    report["workload"] = json{{"pattern", workload.pattern},
                              {"strength", workload.strength},
                              {"noise", workload.noise}};
    q = std::move(w.q);
    k = std::move(w.k);
    gt = std::move(w.ground_truth);
  } else {
    if (q_path.empty() || k_path.empty())
      throw UsageError("discover needs --q and --k, or --gen <pattern>");
    q = load_batch(q_path, Role::kQuery);
    k = load_batch(k_path, Role::kKey);
  }
  require_same_shape(q, k);
  report["shape"] = shape_echo(q);

  const BlockGrid grid = make_block_grid(q.seq_len(), common.config.block_size);
  const float tau = common.config.resolved_scale(q.head_dim());

  Timer timer;
  const BlockScoreMap map = run_discover(method, q, k, grid, tau, common.config.epsilon);
  report["timings_ms"]["discover"] = timer.ms();

  if (gt) {
    report["metrics"]["recall"] =
        planted_score_recall(map.score, *gt, common.config.alpha);
    report["metrics"]["recall_top1"] = planted_top1_recall(map.score, *gt);
  }
  if (compare_exact && method != "exact") {
    Timer exact_timer;
    const BlockScoreMap exact = discover_exact(q, k, grid, tau, common.config.epsilon);
    report["timings_ms"]["discover_exact"] = exact_timer.ms();
    report["metrics"]["rank_corr_exact"] = mean_row_spearman(map.score, exact.score, 5);
  }

  if (!common.out.empty()) {
    save_tensor(map.score, common.out + ".score.fpt");
    save_tensor(map.energy, common.out + ".energy.fpt");
    save_tensor(map.local_max, common.out + ".localmax.fpt");
    report["outputs"] = json{{"score", common.out + ".score.fpt"},
                             {"energy", common.out + ".energy.fpt"},
                             {"local_max", common.out + ".localmax.fpt"}};
  }
  emit_report(report, common, ".report");
  return 0;
}

int cmd_select(const CommonFlags& common, const std::string& scores_path,
               const SelectorChoice& choice) {
  common.config.validate();
  if (scores_path.empty()) throw UsageError("select requires --scores <score tensor>");

  const Tensor<float> score = load_tensor<float>(scores_path);
  if (score.ndim() != 4) throw ValidationError("score map must be Z x H x M x N");
  const BlockGrid grid =
      make_block_grid(score.dim(2) * common.config.block_size, common.config.block_size);

  json report = base_report("select", common);
  report["selector"] = choice.method;
  if (choice.method == "topk") report["selector_k"] = choice.k;
  if (choice.method == "topp") report["selector_p"] = choice.p;

  Timer timer;
  SelectionStats stats;
  const ActiveMask mask = run_selector(choice, score, common.config, &stats);
  const SparseBlockPlan plan = compress_indices(mask);
  report["timings_ms"]["select"] = timer.ms();
  report["metrics"]["density"] = density(plan, grid);
  report["metrics"]["visit_count"] = visit_count(plan);
  if (choice.method == "max") report["metrics"]["score_comparisons"] = stats.score_comparisons;

  if (!common.out.empty()) {
    save_plan(plan, common.out);
    report["outputs"] = json{{"indices", common.out + ".idx.fpt"},
                             {"counts", common.out + ".cnt.fpt"}};
  }
  emit_report(report, common, ".report");
  return 0;
}

int cmd_attend(const CommonFlags& common, const WorkloadFlags& workload,
               const std::string& q_path, const std::string& k_path, const std::string& v_path,
               const std::string& plan_prefix, const std::string& method,
               const SelectorChoice& choice, bool dense_only, bool check, bool lse_natural) {
  common.config.validate();

  json report = base_report("attend", common);

  SequenceBatch q, k, v;
  std::optional<ActiveMask> gt;
  if (!workload.pattern.empty()) {
    Timer timer;
    PlantedWorkload w = build_workload(workload, common.config, workload.L);
    report["timings_ms"]["generate"] = timer.ms();
    q = std::move(w.q);
    k = std::move(w.k);
    v = std::move(w.v);
    gt = std::move(w.ground_truth);
  } else {
    if (q_path.empty() || k_path.empty() || v_path.empty())
      throw UsageError("attend needs --q/--k/--v, or --gen <pattern>");
    q = load_batch(q_path, Role::kQuery);
    k = load_batch(k_path, Role::kKey);
    v = load_batch(v_path, Role::kValue);
  }
  require_same_shape(q, k);
  require_same_shape(q, v);
  report["shape"] = shape_echo(q);

  const BlockGrid grid = make_block_grid(q.seq_len(), common.config.block_size);
  const float tau = common.config.resolved_scale(q.head_dim());

  AttentionOutput result;
  std::optional<AttentionOutput> dense;
  if (dense_only || check) {
    Timer timer;
    dense = dense_attention(q, k, v, tau);
    report["timings_ms"]["attend_dense"] = timer.ms();
  }

  if (dense_only) {
    result = std::move(*dense);
    dense.reset();
  } else {
    SparseBlockPlan plan;
    if (!plan_prefix.empty()) {
      plan = load_plan(plan_prefix);
    } else {
      Timer discover_timer;
      const BlockScoreMap map = run_discover(method, q, k, grid, tau, common.config.epsilon);
      report["timings_ms"]["discover"] = discover_timer.ms();
      Timer select_timer;
      const ActiveMask mask = run_selector(choice, map.score, common.config);
      plan = compress_indices(mask);
      report["timings_ms"]["select"] = select_timer.ms();
      if (gt) {
        report["metrics"]["mask_recall"] = mask_recall(mask, *gt);
        report["metrics"]["mask_precision"] = mask_precision(mask, *gt);
      }
    }
    report["metrics"]["density"] = density(plan, grid);
    report["metrics"]["visit_count"] = visit_count(plan);

    Timer timer;
    AttentionStats stats;
    result = block_sparse_attention(q, k, v, plan, grid, tau, &stats);
    report["timings_ms"]["attend_sparse"] = timer.ms();
    report["metrics"]["block_visits"] = stats.block_visits;
  }

  if (check && dense) {
    const auto out_err = tensor_error(result.out, dense->out);
    const auto lse_err = tensor_error(result.lse, dense->lse);
    report["metrics"]["err_max_abs"] = out_err.max_abs;
    report["metrics"]["err_mean_abs"] = out_err.mean_abs;
    report["metrics"]["lse_err_max_abs"] = lse_err.max_abs;
  }

  if (lse_natural) {
    // convert base-2 log-sum-exp to natural log for cross-checks
    for (std::size_t i = 0; i < result.lse.numel(); ++i)
      result.lse.data()[i] *= 0.6931471805599453f;
    report["lse_units"] = "nat";
  } else {
    report["lse_units"] = "log2";
  }

  if (!common.out.empty()) {
    save_tensor(result.out, common.out + ".out.fpt");
    save_tensor(result.lse, common.out + ".lse.fpt");
    report["outputs"] = json{{"out", common.out + ".out.fpt"},
                             {"lse", common.out + ".lse.fpt"}};
  }
  emit_report(report, common, ".report");
  return 0;
}

int cmd_sweep(const CommonFlags& common, const WorkloadFlags& workload,
              const std::vector<float>& alphas, const std::vector<std::uint32_t>& topks,
              const std::vector<float>& topps, std::vector<std::uint64_t> lengths) {
  common.config.validate();
  if (workload.pattern.empty()) throw UsageError("sweep requires --gen <pattern>");
  if (alphas.empty() && topks.empty() && topps.empty())
    throw UsageError("sweep requires a nonempty --alphas, --topks, or --topps list");
  if (lengths.empty()) lengths.push_back(workload.L);

  json report = base_report("sweep", common);
  report["workload"] = json{{"pattern", workload.pattern},
                            {"strength", workload.strength},
                            {"noise", workload.noise}};
  report["cells"] = json::array();

  for (const std::uint64_t L : lengths) {
    const BlockGrid grid = make_block_grid(L, common.config.block_size);

    if (workload.pattern == "heavy-tail") {
      // selector-only sweep over synthetic score rows
      const auto map = heavy_tail_sweep_map(grid.num_query_blocks, workload.head_mass, 0.2f,
                                            common.config.rng_seed);
      auto run_cell = [&](const std::string& method, double param,
                          const SelectorChoice& choice) {
        PipelineConfig config = common.config;
        if (method == "max") config.alpha = static_cast<float>(param);
        const ActiveMask mask = run_selector(choice, map.score, config);
        const SparseBlockPlan plan = compress_indices(mask);
        std::size_t heavy_rows = 0, head_hits = 0;
        for (std::uint32_t i = 0; i < grid.num_query_blocks; ++i) {
          if (map.head_index[i] < 0) continue;
          ++heavy_rows;
          if (mask.active(0, i, static_cast<std::uint64_t>(map.head_index[i]), 0)) ++head_hits;
        }
        report["cells"].push_back(
            json{{"method", method},
                 {"param", param},
                 {"L", L},
                 {"density", density(plan, grid)},
                 {"visit_count", visit_count(plan)},
                 {"head_retention",
                  heavy_rows == 0 ? 1.0 : static_cast<double>(head_hits) / heavy_rows}});
      };
      for (const float alpha : alphas) run_cell("max", alpha, SelectorChoice{"max", 0, 0.0f});
      for (const std::uint32_t k : topks)
        run_cell("topk", k, SelectorChoice{"topk", k, 0.0f});
      for (const float p : topps) run_cell("topp", p, SelectorChoice{"topp", 0, p});
      continue;
    }

    WorkloadFlags cell_workload = workload;
    cell_workload.L = L;
    cell_workload.target.clear();  // per-length defaults keep targets in range
    Timer gen_timer;
    const PlantedWorkload w = build_workload(cell_workload, common.config, L);
    const double gen_ms = gen_timer.ms();

    const float tau = common.config.resolved_scale(w.q.head_dim());
    Timer discover_timer;
    const BlockScoreMap map = discover(w.q, w.k, grid, tau, common.config.epsilon);
    const double discover_ms = discover_timer.ms();
    Timer dense_timer;
    const AttentionOutput dense = dense_attention(w.q, w.k, w.v, tau);
    const double dense_ms = dense_timer.ms();
    const double full_visits = static_cast<double>(w.q.batch()) * w.q.heads() *
                               grid.num_query_blocks * (grid.num_query_blocks + 1) / 2.0;

    auto run_cell = [&](const std::string& method, double param, const SelectorChoice& choice) {
      PipelineConfig config = common.config;
      if (method == "max") config.alpha = static_cast<float>(param);
      Timer select_timer;
      const ActiveMask mask = run_selector(choice, map.score, config);
      const SparseBlockPlan plan = compress_indices(mask);
      const double select_ms = select_timer.ms();
      Timer attend_timer;
      AttentionStats stats;
      const AttentionOutput sparse = block_sparse_attention(w.q, w.k, w.v, plan, grid, tau,
                                                            &stats);
      const double attend_ms = attend_timer.ms();
      const auto err = tensor_error(sparse.out, dense.out);
      report["cells"].push_back(
          json{{"method", method},
               {"param", param},
               {"L", L},
               {"density", density(plan, grid)},
               {"visit_count", visit_count(plan)},
               {"block_visits", stats.block_visits},
               {"visit_fraction", static_cast<double>(stats.block_visits) / full_visits},
               {"recall", planted_score_recall(map.score, w.ground_truth,
                                               static_cast<float>(method == "max" ? param
                                                                                  : config.alpha))},
               {"mask_recall", mask_recall(mask, w.ground_truth)},
               {"mask_precision", mask_precision(mask, w.ground_truth)},
               {"err_max_abs", err.max_abs},
               {"err_mean_abs", err.mean_abs},
               {"timings_ms",
                json{{"generate", gen_ms},
                     {"discover", discover_ms},
                     {"attend_dense", dense_ms},
                     {"select", select_ms},
                     {"attend_sparse", attend_ms}}}});
    };
    for (const float alpha : alphas) run_cell("max", alpha, SelectorChoice{"max", 0, 0.0f});
    for (const std::uint32_t k : topks) run_cell("topk", k, SelectorChoice{"topk", k, 0.0f});
    for (const float p : topps) run_cell("topp", p, SelectorChoice{"topp", 0, p});
  }

  emit_report(report, common, "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block-sparse causal prefill attention: pattern discovery, max-threshold block "
               "selection, sparse evaluation"};
  app.require_subcommand(1);

  CommonFlags common;
  WorkloadFlags workload;

  auto* gen = app.add_subcommand("gen", "generate a synthetic workload as tensor containers");
  add_common_flags(gen, common);
  add_workload_flags(gen, workload, false);

  auto* discover_cmd =
      app.add_subcommand("discover", "compute the block-level importance map");
  std::string method = "approx";
  std::string q_path, k_path, v_path, scores_path, plan_prefix;
  bool compare_exact = false;
  add_common_flags(discover_cmd, common);
  add_workload_flags(discover_cmd, workload, false);
  discover_cmd->add_option("--method", method, "discovery method")
      ->check(CLI::IsMember({"approx", "pool-both", "exact"}))
      ->capture_default_str();
  discover_cmd->add_option("--q", q_path, "query tensor path");
  discover_cmd->add_option("--k", k_path, "key tensor path");
  discover_cmd->add_flag("--compare-exact", compare_exact,
                         "also run the exact reference and report rank correlation");

  auto* select_cmd = app.add_subcommand("select", "turn a score map into a sparse block plan");
  SelectorChoice choice;
  bool use_topk = false, use_topp = false;
  add_common_flags(select_cmd, common);
  select_cmd->add_option("--scores", scores_path, "score tensor path");
  auto* topk_opt = select_cmd->add_option("--topk", choice.k, "use top-k selection");
  auto* topp_opt = select_cmd->add_option("--topp", choice.p, "use top-p selection");

  auto* attend_cmd = app.add_subcommand("attend", "evaluate block-sparse causal attention");
  bool dense_only = false, check = false, lse_natural = false;
  add_common_flags(attend_cmd, common);
  add_workload_flags(attend_cmd, workload, false);
  attend_cmd->add_option("--q", q_path, "query tensor path");
  attend_cmd->add_option("--k", k_path, "key tensor path");
  attend_cmd->add_option("--v", v_path, "value tensor path");
  attend_cmd->add_option("--plan", plan_prefix, "plan prefix (<prefix>.idx/.cnt.fpt)");
  attend_cmd->add_option("--method", method, "discovery method when no plan is given")
      ->check(CLI::IsMember({"approx", "pool-both", "exact"}))
      ->capture_default_str();
  auto* attend_topk = attend_cmd->add_option("--topk", choice.k, "use top-k selection");
  auto* attend_topp = attend_cmd->add_option("--topp", choice.p, "use top-p selection");
  attend_cmd->add_flag("--dense", dense_only, "run the dense oracle instead of the sparse path");
  attend_cmd->add_flag("--check", check, "also run the dense oracle and report errors");
  attend_cmd->add_flag("--lse-natural", lse_natural, "emit log-sum-exp in natural-log units");

  auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter sweep and emit one row per cell");
  std::vector<float> alphas, topps;
  std::vector<std::uint32_t> topks;
  std::vector<std::uint64_t> lengths;
  add_common_flags(sweep_cmd, common);
  add_workload_flags(sweep_cmd, workload, true);
  sweep_cmd->add_option("--alphas", alphas, "max-threshold alpha values")->delimiter(',');
  sweep_cmd->add_option("--topks", topks, "top-k values")->delimiter(',');
  sweep_cmd->add_option("--topps", topps, "top-p values")->delimiter(',');
  sweep_cmd->add_option("--Ls", lengths, "sequence lengths")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(gen)) return cmd_gen(common, workload);
    if (app.got_subcommand(discover_cmd))
      return cmd_discover(common, workload, method, q_path, k_path, compare_exact);
    if (app.got_subcommand(select_cmd)) {
      use_topk = topk_opt->count() > 0;
      use_topp = topp_opt->count() > 0;
      if (use_topk && use_topp) throw UsageError("choose one of --topk / --topp");
      choice.method = use_topk ? "topk" : use_topp ? "topp" : "max";
      return cmd_select(common, scores_path, choice);
    }
    if (app.got_subcommand(attend_cmd)) {
      use_topk = attend_topk->count() > 0;
      use_topp = attend_topp->count() > 0;
      if (use_topk && use_topp) throw UsageError("choose one of --topk / --topp");
      choice.method = use_topk ? "topk" : use_topp ? "topp" : "max";
      return cmd_attend(common, workload, q_path, k_path, v_path, plan_prefix, method, choice,
                        dense_only, check, lse_natural);
    }
    if (app.got_subcommand(sweep_cmd))
      return cmd_sweep(common, workload, alphas, topks, topps, lengths);
    throw UsageError("no subcommand selected");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const PlanError& e) {
    std::cerr << "plan error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
