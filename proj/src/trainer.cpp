// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace flair {

namespace {

Tensor quartet_rows(const std::vector<Quartet>& qs, const Instance Quartet::*member) {
    std::vector<const Instance*> ptrs;
    ptrs.reserve(qs.size());
    for (const Quartet& q : qs) ptrs.push_back(&(q.*member));
    return stack_features(ptrs);
}

std::vector<int> quartet_labels(const std::vector<Quartet>& qs, const Instance Quartet::*member) {
    std::vector<int> ys;
    ys.reserve(qs.size());
    for (const Quartet& q : qs) ys.push_back((q.*member).y);
    return ys;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct BoundNets {
    BoundMlp content, style, decoder, classifier;
};

Tape::Id transform_node(Tape& t, const BoundNets& nets, Tape::Id src, Tape::Id style_ref) {
    const Tape::Id c = content_node(t, nets.content, src);
    const Tape::Id s = nets.style.forward(t, style_ref);
    const Tape::Id cs[] = {c, s};
    return nets.decoder.forward(t, t.hstack(cs));
}

struct LossGraph {
    Tape::Id r_inv = -1;   // -1 when the transformation model is ablated
    Tape::Id r_cls = -1;
    Tape::Id total = -1;
    RClsComponents comps;
};

/// One sensitive group's classification term: alignment distance for the
/// same-label cross-domain pair, mixture NLL, reconstruction and cross
/// entropy, all as means over quartets.
Tape::Id group_cls_term(Tape& t, const BoundNets& nets, const GroupGmm* gmm, Tape::Id xi,
                        Tape::Id xj, const std::vector<int>& labels, bool with_transform,
                        double* d_out, double* gmm_out, double* rec_out, double* ce_out) {
    const int q = t.value(xi).rows();
    std::vector<Tape::Id> terms;
    if (with_transform) {
        const Tape::Id d = t.scale(t.l1_distance(xi, transform_node(t, nets, xi, xj)), 1.0 / q);
        *d_out = t.value(d).data[0];
        terms.push_back(d);
    }
    const Tape::Id c = content_node(t, nets.content, xi);
    Tape::Id rep = c;
    if (gmm != nullptr) {
        const Tape::Id nll = gmm_nll_node(t, c, *gmm, true);
        *gmm_out = t.value(nll).data[0];
        terms.push_back(nll);
        const Tape::Id gamma = posterior_node(t, c, *gmm);
        const Tape::Id c_tilde = reconstruct_node(t, gamma, *gmm);
        const Tape::Id rec = l_rec_node(t, c, c_tilde, true);
        *rec_out = t.value(rec).data[0];
        terms.push_back(rec);
        rep = c_tilde;
    }
    const Tape::Id ce = t.cross_entropy_logits(nets.classifier.forward(t, rep), labels);
    *ce_out = t.value(ce).data[0];
    terms.push_back(ce);
    Tape::Id sum = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) sum = t.add(sum, terms[i]);
    return sum;
}

LossGraph build_losses(Tape& t, const BoundNets& nets, const QuartetBatch& batch,
                       const FairGmmParams& gmm, const TrainerConfig& cfg,
                       const DualState& duals, double rfair_hat) {
    check_invariance_pairing(batch);
    LossGraph g;
    const Tape::Id x1 = t.constant(quartet_rows(batch.quartets, &Quartet::r1));
    const Tape::Id x2 = t.constant(quartet_rows(batch.quartets, &Quartet::r2));
    const Tape::Id x3 = t.constant(quartet_rows(batch.quartets, &Quartet::r3));
    const Tape::Id x4 = t.constant(quartet_rows(batch.quartets, &Quartet::r4));
    const int q = static_cast<int>(batch.quartets.size());

    if (!cfg.no_t) {
        const Tape::Id d12 = t.l1_distance(x1, transform_node(t, nets, x1, x2));
        const Tape::Id d34 = t.l1_distance(x3, transform_node(t, nets, x3, x4));
        g.r_inv = t.scale(t.add(d12, d34), 1.0 / q);
    }

    const GroupGmm* gmm_neg = cfg.no_g ? nullptr : &gmm.neg;
    const GroupGmm* gmm_pos = cfg.no_g ? nullptr : &gmm.pos;
    const Tape::Id cls_neg =
        group_cls_term(t, nets, gmm_neg, x1, x3, quartet_labels(batch.quartets, &Quartet::r1),
                       !cfg.no_t, &g.comps.d_neg, &g.comps.gmm_neg, &g.comps.rec_neg,
                       &g.comps.ce_neg);
    const Tape::Id cls_pos =
        group_cls_term(t, nets, gmm_pos, x2, x4, quartet_labels(batch.quartets, &Quartet::r2),
                       !cfg.no_t, &g.comps.d_pos, &g.comps.gmm_pos, &g.comps.rec_pos,
                       &g.comps.ce_pos);
    g.r_cls = t.add(cls_neg, cls_pos);

    Tape::Id total = g.r_cls;
    if (g.r_inv >= 0) total = t.add(total, t.scale(g.r_inv, duals.lambda_inv));
    // the fairness surrogate is a function of the EM-owned weights only, so
    // it enters the primal objective as a constant
    total = t.add_const(total, duals.lambda_fair * rfair_hat);
    g.total = total;
    return g;
}

void split_contents_by_group(const Mlp& content, const QuartetBatch& batch, Tensor* neg,
                             Tensor* pos) {
    std::vector<const Instance*> gneg, gpos;
    for (const Quartet& q : batch.quartets)
        for (const Instance* inst : {&q.r1, &q.r2, &q.r3, &q.r4})
            (inst->a == 1 ? gpos : gneg).push_back(inst);
    if (gneg.empty() || gpos.empty())
        throw std::runtime_error("train: a sensitive group is empty in the sampled batch");
    *neg = encode_content_batch(content, stack_features(gneg));
    *pos = encode_content_batch(content, stack_features(gpos));
}

}  // namespace

void TrainerConfig::validate() const {
    if (primal_lr <= 0 || dual_step_inv <= 0 || dual_step_fair <= 0)
        throw std::invalid_argument("TrainerConfig: step sizes must be positive");
    if (margin_inv < 0 || margin_fair < 0)
        throw std::invalid_argument("TrainerConfig: margins must be nonnegative");
    if (prototypes < 2) throw std::invalid_argument("TrainerConfig: need at least 2 prototypes");
    if (quartets_per_batch < 1 || max_steps < 1)
        throw std::invalid_argument("TrainerConfig: batch size and step budget must be positive");
    if (lambda_inv_init < 0 || lambda_fair_init < 0)
        throw std::invalid_argument("TrainerConfig: multipliers must start nonnegative");
}

DualState dual_update(const DualState& duals, double r_inv_value, double rfair_hat,
                      const TrainerConfig& cfg) {
    DualState next;
    next.lambda_inv = std::max(duals.lambda_inv + cfg.dual_step_inv * (r_inv_value - cfg.margin_inv), 0.0);
    next.lambda_fair =
        std::max(duals.lambda_fair + cfg.dual_step_fair * (rfair_hat - cfg.margin_fair), 0.0);
    return next;
}

ModelParams init_model(int feature_dim, const TrainerConfig& cfg) {
    Rng root(Rng::mix(cfg.seed, 0x1417ULL));
    Rng rc = root.fork(1), rs = root.fork(2), rd = root.fork(3), rw = root.fork(4);
    ModelParams m;
    m.content = Mlp::create({feature_dim, cfg.hidden, cfg.content_dim}, rc);
    m.style = Mlp::create({feature_dim, cfg.hidden, cfg.style_dim}, rs);
    m.decoder = Mlp::create({cfg.content_dim + cfg.style_dim, cfg.hidden, feature_dim}, rd);
    m.classifier = Mlp::create({cfg.content_dim, cfg.classifier_hidden, 2}, rw);
    return m;
}

RClsComponents r_cls(const QuartetBatch& batch, const ModelParams& model,
                     const TrainerConfig& cfg) {
    if (!cfg.no_g && model.gmm.empty())
        throw std::invalid_argument("r_cls: mixture params not estimated yet");
    Tape t;
    BoundNets nets{bind(t, model.content), bind(t, model.style), bind(t, model.decoder),
                   bind(t, model.classifier)};
    DualState duals;  // multipliers do not enter the classification loss
    LossGraph g = build_losses(t, nets, batch, model.gmm, cfg, duals, 0.0);
    return g.comps;
}

TrainResult train(const Dataset& data, const TrainerConfig& cfg, const StepObserver& observer) {
    cfg.validate();
    int train_domains = 0;
    for (const DomainSpec& d : data.domains)
        if (d.id != data.heldout) ++train_domains;
    if (train_domains < 2)
        throw std::invalid_argument("train: need at least 2 training domains, have " +
                                    std::to_string(train_domains));
    if (data.instances.empty()) throw std::invalid_argument("train: empty dataset");
    const int feature_dim = static_cast<int>(data.instances.front().x.size());

    TrainResult res;
    res.model = init_model(feature_dim, cfg);
    res.duals = DualState{cfg.lambda_inv_init, cfg.no_rfair ? 0.0 : cfg.lambda_fair_init};

    std::vector<Tensor> net_params;
    auto gather_params = [&](const ModelParams& m) {
        std::vector<Tensor> out;
        for (const Mlp* net : {&m.content, &m.style, &m.decoder, &m.classifier})
            for (const Tensor& p : net->params) out.push_back(p);
        return out;
    };
    auto scatter_params = [&](ModelParams& m, const std::vector<Tensor>& flat) {
        std::size_t i = 0;
        for (Mlp* net : {&m.content, &m.style, &m.decoder, &m.classifier})
            for (Tensor& p : net->params) p = flat[i++];
    };
    net_params = gather_params(res.model);
    AdamState adam = AdamState::like(net_params, cfg.primal_lr);

    Rng batch_rng(Rng::mix(cfg.seed, 0xBA7C4ULL));
    int last_good = -1;

    for (int step = 0; step < cfg.max_steps; ++step) {
        QuartetBatch batch = sample_quartets(data, cfg.quartets_per_batch, batch_rng);
        res.quartet_relaxations += batch.relaxed_count;

        StepDiagnostics diag;
        diag.step = step;
        try {
            double rfair_hat = 0.0, rfair_exact_v = 0.0;
            if (!cfg.no_g) {
                Tensor cneg, cpos;
                split_contents_by_group(res.model.content, batch, &cneg, &cpos);
                const double lambda_em = cfg.no_rfair ? 0.0 : res.duals.lambda_fair;
                const FairGmmParams* warm =
                    (cfg.em_warm_start && !res.model.gmm.empty()) ? &res.model.gmm : nullptr;
                EmResult em = fair_em(cneg, cpos, cfg.prototypes, lambda_em, cfg.em_tol,
                                      cfg.em_max_iter, Rng::mix(cfg.seed, 0xE31ULL + step), warm);
                res.model.gmm = em.params;
                rfair_hat = fair_loss_approx(res.model.gmm);
                rfair_exact_v = fair_loss_exact(cneg, cpos, res.model.gmm);
                for (int k = 0; k < res.model.gmm.k(); ++k) {
                    diag.sum_pi_neg += res.model.gmm.neg.weights.at(0, k);
                    diag.sum_pi_pos += res.model.gmm.pos.weights.at(0, k);
                }
            }

            Tape t;
            BoundNets nets{bind(t, res.model.content), bind(t, res.model.style),
                           bind(t, res.model.decoder), bind(t, res.model.classifier)};
            LossGraph g = build_losses(t, nets, batch, res.model.gmm, cfg, res.duals, rfair_hat);

            const double total = t.value(g.total).data[0];
            if (!std::isfinite(total))
                throw std::runtime_error("non-finite training loss " + std::to_string(total));
            t.backward(g.total);

            std::vector<Tensor> grads;
            for (const BoundMlp* b : {&nets.content, &nets.style, &nets.decoder, &nets.classifier})
                for (Tape::Id id : b->param_ids) grads.push_back(t.grad_or_zero(id));
            net_params = gather_params(res.model);
            adam_step(net_params, grads, adam);  // throws on non-finite grads
            scatter_params(res.model, net_params);

            diag.r_cls = g.comps.total();
            diag.r_inv = g.r_inv >= 0 ? t.value(g.r_inv).data[0] : 0.0;
            diag.rfair_hat = rfair_hat;
            diag.rfair_exact = rfair_exact_v;

            if (!cfg.fixed_duals) {
                res.duals = dual_update(res.duals, diag.r_inv, rfair_hat, cfg);
                if (cfg.no_rfair) res.duals.lambda_fair = 0.0;
                if (cfg.no_t) res.duals.lambda_inv = 0.0;
            }
            diag.lambda_inv = res.duals.lambda_inv;
            diag.lambda_fair = res.duals.lambda_fair;
        } catch (const std::runtime_error& e) {
            throw TrainingAborted("train: aborted at step " + std::to_string(step) + ": " +
                                      e.what() + "; last good step " + std::to_string(last_good),
                                  last_good);
        }

        res.history.push_back(diag);
        last_good = step;
        res.steps_run = step + 1;
        if (observer) observer(step, res.model, res.duals);

        // plateau: compare windowed means of the three loss components
        const int w = cfg.plateau_window;
        if (w >= 2 && static_cast<int>(res.history.size()) >= 2 * w) {
            auto wmean = [&](double StepDiagnostics::*f, int lo, int hi) {
                double s = 0.0;
                for (int i = lo; i < hi; ++i) s += res.history[i].*f;
                return s / (hi - lo);
            };
            const int n = static_cast<int>(res.history.size());
            bool flat = true;
            for (double StepDiagnostics::*f :
                 {&StepDiagnostics::r_cls, &StepDiagnostics::r_inv, &StepDiagnostics::rfair_hat}) {
                const double m_old = wmean(f, n - 2 * w, n - w);
                const double m_new = wmean(f, n - w, n);
                if (std::fabs(m_new - m_old) > cfg.plateau_rel * std::max(std::fabs(m_old), 1e-12))
                    flat = false;
            }
            if (flat) {
                res.plateaued = true;
                break;
            }
        }
    }
    return res;
}

Prediction predict(const std::vector<double>& x, int a, const ModelParams& model) {
    const Embedding e = embed(x, a, model);
    const std::vector<double> logits = model.classifier.forward(e.fair_content);
    const double z = logits[1] - logits[0];
    double score = 1.0 / (1.0 + std::exp(-z));
    score = std::min(std::max(score, 1e-15), 1.0 - 1e-15);
    Prediction p;
    p.score = score;
    p.label = score > 0.5 ? 1 : 0;
    return p;
}

Embedding embed(const std::vector<double>& x, int a, const ModelParams& model) {
    Embedding e;
    e.content = encode_content(model.content, x);
    if (model.gmm.empty()) {
        e.fair_content = e.content;
        return e;
    }
    const GroupGmm& g = model.gmm.group(a);
    Tensor c({1, static_cast<int>(e.content.size())}, e.content);
    const Tensor gamma = posterior(c, g);
    e.fair_content.assign(g.dim(), 0.0);
    for (int k = 0; k < g.k(); ++k)
        for (int j = 0; j < g.dim(); ++j)
            e.fair_content[j] += gamma.at(k, 0) * g.means.at(k, j);
    return e;
}

// ---------------------------------------------------------------- io

namespace {

void write_tensor(std::ofstream& f, const std::string& name, const Tensor& t) {
    f << "tensor " << name << ' ' << t.shape.size();
    for (int s : t.shape) f << ' ' << s;
    f << "\n";
    for (std::size_t i = 0; i < t.data.size(); ++i)
        f << (i ? " " : "") << format_double(t.data[i]);
    f << "\n";
}

void write_mlp(std::ofstream& f, const std::string& prefix, const Mlp& net) {
    for (int l = 0; l < net.layers(); ++l) {
        write_tensor(f, prefix + ".w" + std::to_string(l), net.params[2 * l]);
        write_tensor(f, prefix + ".b" + std::to_string(l), net.params[2 * l + 1]);
    }
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << "flair-checkpoint 1\n";
    write_mlp(f, "content", model.content);
    write_mlp(f, "style", model.style);
    write_mlp(f, "decoder", model.decoder);
    write_mlp(f, "classifier", model.classifier);
    if (!model.gmm.empty()) {
        write_tensor(f, "gmm.neg.mu", model.gmm.neg.means);
        write_tensor(f, "gmm.neg.var", model.gmm.neg.vars);
        write_tensor(f, "gmm.neg.pi", model.gmm.neg.weights);
        write_tensor(f, "gmm.pos.mu", model.gmm.pos.means);
        write_tensor(f, "gmm.pos.var", model.gmm.pos.vars);
        write_tensor(f, "gmm.pos.pi", model.gmm.pos.weights);
    }
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string header;
    std::getline(f, header);
    if (header != "flair-checkpoint 1")
        throw std::runtime_error("load_checkpoint: bad header in " + path);

    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tag, name;
        int rank = 0;
        is >> tag >> name >> rank;
        if (tag != "tensor" || rank <= 0)
            throw std::runtime_error("load_checkpoint: malformed tensor line: " + line);
        std::vector<int> shape(rank);
        std::size_t count = 1;
        for (int& s : shape) {
            is >> s;
            count *= static_cast<std::size_t>(s);
        }
        std::vector<double> values(count);
        if (!std::getline(f, line))
            throw std::runtime_error("load_checkpoint: missing values for " + name);
        std::istringstream vs(line);
        for (double& v : values)
            if (!(vs >> v)) throw std::runtime_error("load_checkpoint: short values for " + name);
        tensors.emplace_back(name, Tensor(shape, std::move(values)));
    }

    auto take_mlp = [&](const std::string& prefix) {
        Mlp net;
        std::vector<Tensor> params;
        for (const auto& [name, t] : tensors)
            if (name.rfind(prefix + ".", 0) == 0) params.push_back(t);
        if (params.empty() || params.size() % 2 != 0)
            throw std::runtime_error("load_checkpoint: missing tensors for " + prefix);
        net.params = params;
        net.dims.push_back(params[0].rows());
        for (std::size_t l = 0; l < params.size(); l += 2) net.dims.push_back(params[l].cols());
        return net;
    };
    auto find_tensor = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    };

    ModelParams m;
    m.content = take_mlp("content");
    m.style = take_mlp("style");
    m.decoder = take_mlp("decoder");
    m.classifier = take_mlp("classifier");
    if (const Tensor* mu = find_tensor("gmm.neg.mu")) {
        m.gmm.neg.means = *mu;
        m.gmm.neg.vars = *find_tensor("gmm.neg.var");
        m.gmm.neg.weights = *find_tensor("gmm.neg.pi");
        m.gmm.pos.means = *find_tensor("gmm.pos.mu");
        m.gmm.pos.vars = *find_tensor("gmm.pos.var");
        m.gmm.pos.weights = *find_tensor("gmm.pos.pi");
    }
    return m;
}

void write_history_csv(const std::vector<StepDiagnostics>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
    f << "step,R_cls,R_inv,Rfair_hat,Rfair_exact,lambda1,lambda2,sum_pi_a1,sum_pi_am1\n";
    for (const StepDiagnostics& d : history)
        f << d.step << ',' << format_double(d.r_cls) << ',' << format_double(d.r_inv) << ','
          << format_double(d.rfair_hat) << ',' << format_double(d.rfair_exact) << ','
          << format_double(d.lambda_inv) << ',' << format_double(d.lambda_fair) << ','
          << format_double(d.sum_pi_pos) << ',' << format_double(d.sum_pi_neg) << "\n";
}

void write_prototypes_csv(const FairGmmParams& gmm, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_prototypes_csv: cannot open " + path);
    const int dim = gmm.empty() ? 0 : gmm.neg.dim();
    f << "group,k,pi";
    for (int j = 0; j < dim; ++j) f << ",mu" << j;
    for (int j = 0; j < dim; ++j) f << ",sigma" << j;
    f << "\n";
    if (gmm.empty()) return;
    for (int a : {-1, 1}) {
        const GroupGmm& g = gmm.group(a);
        for (int k = 0; k < g.k(); ++k) {
            f << a << ',' << k << ',' << format_double(g.weights.at(0, k));
            for (int j = 0; j < dim; ++j) f << ',' << format_double(g.means.at(k, j));
            for (int j = 0; j < dim; ++j) f << ',' << format_double(g.vars.at(k, j));
            f << "\n";
        }
    }
}

}  // namespace flair
