#include "desalign/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <set>

#include "desalign/encoder/encoder.hpp"
#include "desalign/errors.hpp"
#include "desalign/training/augment.hpp"

namespace desalign::training {

namespace {

using encoder::EncoderParams;

struct AdamState {
  std::vector<DenseMatrix> m;
  std::vector<DenseMatrix> v;
  std::size_t t = 0;
};

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.task_0 += w * x.task_0;
  acc.task_k += w * x.task_k;
  for (const auto& [m, v] : x.modal_km1) acc.modal_km1[m] += w * v;
  for (const auto& [m, v] : x.modal_k) acc.modal_k[m] += w * v;
  acc.penalty += w * x.penalty;
  acc.total += w * x.total;
  acc.e_0 += w * x.e_0;
  acc.e_km1 += w * x.e_km1;
  acc.e_k += w * x.e_k;
  acc.phi_floored += x.phi_floored;
}

// Compares H@1 first, MRR second: 1 better, 0 tied, -1 worse.
int compare(const eval::MetricsReport& candidate, const std::optional<eval::MetricsReport>& best) {
  if (!best) return 1;
  const double h = candidate.hits_at(1);
  const double b = best->hits_at(1);
  if (h != b) return h > b ? 1 : -1;
  if (candidate.mrr != best->mrr) return candidate.mrr > best->mrr ? 1 : -1;
  return 0;
}

class StageRunner {
 public:
  StageRunner(const UnionGraph& graph, const TrainConfig& cfg, const std::vector<AlignmentPair>& validation,
              TrainResult& result)
      : graph_(graph), cfg_(cfg), validation_(validation), result_(result), inputs_(graph.inputs()) {}

  void run(std::size_t stage, const std::vector<AlignmentPair>& fit, std::size_t epochs) {
    if (epochs == 0 || fit.empty()) return;
    EncoderParams& params = current_;
    std::vector<DenseMatrix*> slots = encoder::tensors(params);
    AdamState adam;
    for (DenseMatrix* s : slots) {
      adam.m.emplace_back(s->rows(), s->cols());
      adam.v.emplace_back(s->rows(), s->cols());
    }
    std::vector<DenseMatrix> grads;
    for (DenseMatrix* s : slots) grads.emplace_back(s->rows(), s->cols());

    const std::size_t batch = std::min(cfg_.batch_size, fit.size());
    const std::size_t batches = (fit.size() + batch - 1) / batch;
    const std::size_t steps_per_epoch = (batches + cfg_.grad_accumulation - 1) / cfg_.grad_accumulation;
    const std::size_t total_steps = epochs * steps_per_epoch;
    std::mt19937_64 rng(cfg_.seed + 0x9e3779b97f4a7c15ULL * stage);
    std::vector<std::size_t> order(fit.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      HistoryRow row;
      row.stage = stage;
      row.epoch = epoch;
      std::size_t pending = 0;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(fit.size(), lo + batch);
        std::vector<std::size_t> src, tgt;
        for (std::size_t k = lo; k < hi; ++k) {
          src.push_back(fit[order[k]].source);
          tgt.push_back(graph_.target_row(fit[order[k]].target));
        }
        Tape tape;
        encoder::ParamVars pv = encoder::bind(tape, params);
        encoder::ForwardResult f = encoder::forward(inputs_, pv, params.config);
        LossTerms terms = total_loss(f, params.config.modalities, graph_.laplacian, src, tgt, cfg_.loss);
        accumulate(row.loss, terms.breakdown, 1.0 / static_cast<double>(batches));
        Var objective = terms.total;
        if (cfg_.grad_accumulation > 1)
          objective = tensor::scale(objective, 1.0 / static_cast<double>(cfg_.grad_accumulation));
        tape.backward(objective);
        std::vector<Var*> bound = encoder::vars(pv);
        for (std::size_t k = 0; k < slots.size(); ++k) grads[k] = grads[k] + tape.grad(*bound[k]);
        ++pending;
        if (pending == cfg_.grad_accumulation || b + 1 == batches) {
          row.learning_rate = scheduled_rate(cfg_, step_in_stage_, total_steps);
          step(adam, slots, grads, row.learning_rate);
          ++step_in_stage_;
          pending = 0;
          for (DenseMatrix& g : grads) g = DenseMatrix(g.rows(), g.cols());
        }
      }
      for (DenseMatrix* s : slots)
        if (!s->all_finite())
          throw NumericalError("training diverged in stage " + std::to_string(stage) + " epoch " +
                               std::to_string(epoch) + ": parameters are no longer finite");

      row.loss.constraint = energy::constraint_monitor(row.loss.e_k, row.loss.e_km1, row.loss.e_0, cfg_.loss.constraint);
      if (!validation_.empty()) {
        row.validation = evaluate_pairs(graph_, params, validation_);
        // A tie keeps the later, longer-trained parameters but does not
        // reset the patience counter. Small validation splits saturate early.
        const int order = compare(*row.validation, best_metrics_);
        if (order >= 0) {
          best_metrics_ = row.validation;
          best_ = params;
          result_.best_epoch = epoch;
          result_.best_stage = stage;
        }
        if (order > 0)
          since_best = 0;
        else
          ++since_best;
      }
      result_.history.push_back(std::move(row));
      if (cfg_.patience > 0 && since_best >= cfg_.patience) break;
    }
    step_in_stage_ = 0;
    if (best_) current_ = *best_;
  }

  EncoderParams current_;

 private:
  void step(AdamState& adam, const std::vector<DenseMatrix*>& slots, const std::vector<DenseMatrix>& grads,
            double lr) {
    ++adam.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(adam.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(adam.t));
    for (std::size_t k = 0; k < slots.size(); ++k) {
      auto p = slots[k]->data();
      auto g = grads[k].data();
      auto m = adam.m[k].data();
      auto v = adam.v[k].data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
        p[i] -= lr * (update + cfg_.weight_decay * p[i]);
      }
    }
  }

  const UnionGraph& graph_;
  const TrainConfig& cfg_;
  const std::vector<AlignmentPair>& validation_;
  TrainResult& result_;
  encoder::EncoderInputs inputs_;
  std::optional<EncoderParams> best_;
  std::optional<eval::MetricsReport> best_metrics_;
  std::size_t step_in_stage_ = 0;
};

}  // namespace

encoder::EncoderInputs UnionGraph::inputs() const {
  encoder::EncoderInputs in;
  in.pattern = &normalized;
  in.features = features;
  return in;
}

std::map<Modality, std::size_t> UnionGraph::input_dims() const {
  std::map<Modality, std::size_t> dims;
  for (const auto& [m, f] : features) dims[m] = f.cols();
  return dims;
}

UnionGraph build_union(const mmkg::MMKG& source, const mmkg::MMKG& target, bool self_loops) {
  UnionGraph u;
  u.source_n = source.n;
  u.target_n = target.n;
  u.source_ops = mmkg::build_operators(source, self_loops);
  u.target_ops = mmkg::build_operators(target, self_loops);
  u.normalized = tensor::block_diagonal(u.source_ops.normalized, u.target_ops.normalized);
  u.laplacian = tensor::block_diagonal(u.source_ops.laplacian, u.target_ops.laplacian);
  for (Modality m : mmkg::kTableModalities) {
    if (!source.has(m) || !target.has(m)) continue;
    const DenseMatrix& a = source.table(m).values;
    const DenseMatrix& b = target.table(m).values;
    if (a.cols() != b.cols())
      throw StructuralError("modality " + std::string(mmkg::modality_name(m)) + " has width " +
                            std::to_string(a.cols()) + " in the source graph and " + std::to_string(b.cols()) +
                            " in the target graph");
    u.features[m] = tensor::vconcat(std::vector<DenseMatrix>{a, b});
  }
  return u;
}

void TrainConfig::validate() const {
  if (!(loss.modality.tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warm-up fraction must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("optimizer moments must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("optimizer epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (grad_accumulation == 0) throw ConfigError("gradient accumulation must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
  if (!(loss.modality.phi_floor > 0.0)) throw ConfigError("confidence floor must be positive");
  if (!(loss.penalty_coef >= 0.0)) throw ConfigError("energy penalty coefficient must be non-negative");
  if (!(loss.constraint.c_min > 0.0) || !(loss.constraint.c_max > 0.0))
    throw ConfigError("constraint bounds c_min and c_max must be positive");
}

double scheduled_rate(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  if (total == 0) return cfg.learning_rate;
  const auto warm = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total)));
  if (step < warm) return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warm);
  const std::size_t span = total - warm;
  if (span <= 1) return cfg.learning_rate;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::pair<std::vector<AlignmentPair>, std::vector<AlignmentPair>> split_validation(
    const std::vector<AlignmentPair>& seeds, double fraction, std::uint64_t seed) {
  std::vector<AlignmentPair> shuffled = seeds;
  std::mt19937_64 rng(seed ^ 0x76616c6964ULL);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(seeds.size())));
  if (n_val >= shuffled.size()) n_val = shuffled.empty() ? 0 : shuffled.size() - 1;
  std::vector<AlignmentPair> val(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<AlignmentPair> fit(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
  return {fit, val};
}

eval::MetricsReport evaluate_pairs(const UnionGraph& graph, const encoder::EncoderParams& params,
                                   const std::vector<AlignmentPair>& pairs) {
  const DenseMatrix h = encoder::joint_embedding(graph.inputs(), params);
  std::vector<std::size_t> src, tgt;
  eval::GoldPairs gold;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    src.push_back(pairs[k].source);
    tgt.push_back(graph.target_row(pairs[k].target));
    gold.emplace_back(k, k);
  }
  const DenseMatrix omega = eval::similarity_matrix(tensor::select_rows(h, src), tensor::select_rows(h, tgt));
  return eval::evaluate(omega, gold);
}

TrainResult train(const UnionGraph& graph, const std::vector<AlignmentPair>& seeds, encoder::EncoderParams init,
                  const TrainConfig& cfg) {
  cfg.validate();
  init.config.validate();
  if (init.config.uses(Modality::g) && init.entities != graph.size())
    throw StructuralError("encoder holds " + std::to_string(init.entities) + " structure embeddings for a graph of " +
                          std::to_string(graph.size()) + " entities");
  for (const AlignmentPair& p : seeds)
    if (p.source >= graph.source_n || p.target >= graph.target_n)
      throw StructuralError("seed pair (" + std::to_string(p.source) + ", " + std::to_string(p.target) +
                            ") outside the graphs");

  TrainResult result;
  result.params = init;
  if (cfg.epochs == 0 && !cfg.iterative) return result;
  if (seeds.empty()) throw ConfigError("training needs at least one seed pair");

  auto [fit, val] = split_validation(seeds, cfg.validation_fraction, cfg.seed);
  StageRunner runner(graph, cfg, val, result);
  runner.current_ = std::move(init);
  runner.run(1, fit, cfg.epochs);

  if (cfg.iterative) {
    std::set<std::size_t> used_s, used_t;
    for (const AlignmentPair& p : seeds) {
      used_s.insert(p.source);
      used_t.insert(p.target);
    }
    std::vector<std::size_t> pool_s, pool_t;
    for (std::size_t i = 0; i < graph.source_n; ++i)
      if (!used_s.count(i)) pool_s.push_back(i);
    for (std::size_t j = 0; j < graph.target_n; ++j)
      if (!used_t.count(j)) pool_t.push_back(graph.target_row(j));
    if (!pool_s.empty() && !pool_t.empty()) {
      const DenseMatrix h = encoder::joint_embedding(graph.inputs(), runner.current_);
      const DenseMatrix omega =
          eval::similarity_matrix(tensor::select_rows(h, pool_s), tensor::select_rows(h, pool_t));
      for (auto [i, j] : mutual_nearest(omega, cfg.mutual_floor))
        result.augmented.push_back({pool_s[i], pool_t[j] - graph.source_n});
    }
    std::vector<AlignmentPair> extended = fit;
    extended.insert(extended.end(), result.augmented.begin(), result.augmented.end());
    runner.run(2, extended, cfg.iterative_epochs);
  }
  result.params = std::move(runner.current_);
  return result;
}

void write_history_csv(const std::vector<HistoryRow>& rows, const std::vector<Modality>& modalities,
                       std::ostream& out) {
  auto f = [](double v) { return mmkg::format_double(v); };
  out << "stage,epoch,lr,L_task0,L_taskk";
  for (Modality m : modalities) out << ",L_" << mmkg::modality_name(m) << "_km1";
  for (Modality m : modalities) out << ",L_" << mmkg::modality_name(m) << "_k";
  out << ",penalty,total,phi_floored,val_h1,val_h10,val_mrr,E_0,E_km1,E_k,energy_lower,energy_upper,"
         "energy_violated\n";
  for (const HistoryRow& r : rows) {
    const LossBreakdown& l = r.loss;
    out << r.stage << ',' << r.epoch << ',' << f(r.learning_rate) << ',' << f(l.task_0) << ',' << f(l.task_k);
    for (Modality m : modalities) out << ',' << (l.modal_km1.count(m) ? f(l.modal_km1.at(m)) : "");
    for (Modality m : modalities) out << ',' << (l.modal_k.count(m) ? f(l.modal_k.at(m)) : "");
    out << ',' << f(l.penalty) << ',' << f(l.total) << ',' << l.phi_floored;
    if (r.validation)
      out << ',' << f(r.validation->hits_at(1)) << ',' << f(r.validation->hits_at(10)) << ',' << f(r.validation->mrr);
    else
      out << ",,,";
    const energy::ConstraintStatus& c = l.constraint;
    out << ',' << f(l.e_0) << ',' << f(l.e_km1) << ',' << f(l.e_k) << ',' << f(c.lower) << ',' << f(c.upper) << ','
        << (c.satisfied ? 0 : 1) << '\n';
  }
}

}  // namespace desalign::training
