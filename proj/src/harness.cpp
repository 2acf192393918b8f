// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace flair {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d)) throw ConfigError("config: " + key + " must be an integer, got " + v);
    return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (!rotate_all && (heldout < 0 || heldout > 5))
        throw ConfigError("config: heldout must be a benchmark domain id 0..5 or 'all'");
    if (metric_k < 1) throw ConfigError("config: metric_k must be >= 1");
    static const char* kVariants[] = {"full", "no_g", "no_T", "no_Rfair", "fixed_duals"};
    if (std::find(std::begin(kVariants), std::end(kVariants), variant) == std::end(kVariants))
        throw ConfigError("config: unknown variant '" + variant + "'");
    if (!sweep_param.empty() && sweep_param != "lambda2" && sweep_param != "K" &&
        sweep_param != "variant")
        throw ConfigError("config: sweep_param must be lambda2, K or variant");
    try {
        trainer.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "n_per_domain") cfg.gen.n_per_domain = to_int(key, val);
        else if (key == "feature_dim") cfg.gen.dim = to_int(key, val);
        else if (key == "noise_sigma") cfg.gen.noise_sigma = to_double(key, val);
        else if (key == "sensitive_offset") cfg.gen.sensitive_offset = to_double(key, val);
        else if (key == "primal_lr") cfg.trainer.primal_lr = to_double(key, val);
        else if (key == "dual_step_inv") cfg.trainer.dual_step_inv = to_double(key, val);
        else if (key == "dual_step_fair") cfg.trainer.dual_step_fair = to_double(key, val);
        else if (key == "margin_inv") cfg.trainer.margin_inv = to_double(key, val);
        else if (key == "margin_fair") cfg.trainer.margin_fair = to_double(key, val);
        else if (key == "lambda_inv_init") cfg.trainer.lambda_inv_init = to_double(key, val);
        else if (key == "lambda_fair_init") cfg.trainer.lambda_fair_init = to_double(key, val);
        else if (key == "prototypes") cfg.trainer.prototypes = to_int(key, val);
        else if (key == "quartets_per_batch") cfg.trainer.quartets_per_batch = to_int(key, val);
        else if (key == "max_steps") cfg.trainer.max_steps = to_int(key, val);
        else if (key == "em_max_iter") cfg.trainer.em_max_iter = to_int(key, val);
        else if (key == "em_tol") cfg.trainer.em_tol = to_double(key, val);
        else if (key == "em_warm_start") cfg.trainer.em_warm_start = to_bool(key, val);
        else if (key == "content_dim") cfg.trainer.content_dim = to_int(key, val);
        else if (key == "style_dim") cfg.trainer.style_dim = to_int(key, val);
        else if (key == "hidden") cfg.trainer.hidden = to_int(key, val);
        else if (key == "classifier_hidden") cfg.trainer.classifier_hidden = to_int(key, val);
        else if (key == "plateau_rel") cfg.trainer.plateau_rel = to_double(key, val);
        else if (key == "plateau_window") cfg.trainer.plateau_window = to_int(key, val);
        else if (key == "heldout") {
            if (val == "all") {
                cfg.rotate_all = true;
                cfg.heldout = -1;
            } else {
                cfg.rotate_all = false;
                cfg.heldout = to_int(key, val);
            }
        } else if (key == "metric_k") cfg.metric_k = to_int(key, val);
        else if (key == "outdir") cfg.outdir = val;
        else if (key == "variant") cfg.variant = val;
        else if (key == "dump_all_embeddings") cfg.dump_all_embeddings = to_bool(key, val);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const std::string& s : split_list(val))
                cfg.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s)));
        } else if (key == "sweep_param") cfg.sweep_param = val;
        else if (key == "sweep_values") cfg.sweep_values = split_list(val);
        else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config_text(os.str());
}

void apply_variant(TrainerConfig* cfg, const std::string& variant) {
    cfg->no_g = cfg->no_t = cfg->no_rfair = cfg->fixed_duals = false;
    if (variant == "full") return;
    if (variant == "no_g") cfg->no_g = true;
    else if (variant == "no_T") cfg->no_t = true;
    else if (variant == "no_Rfair") cfg->no_rfair = true;
    else if (variant == "fixed_duals") cfg->fixed_duals = true;
    else throw ConfigError("unknown variant '" + variant + "'");
}

// ---------------------------------------------------------------- ERM

ErmModel train_erm(const Dataset& data, const TrainerConfig& cfg) {
    const auto train = data.train_split();
    if (train.empty()) throw std::invalid_argument("train_erm: empty training split");
    const int dim = static_cast<int>(train.front()->x.size());
    Rng init_rng(Rng::mix(cfg.seed, 0xE12ULL));
    ErmModel model;
    model.net = Mlp::create({dim, cfg.hidden, 2}, init_rng);
    AdamState adam = AdamState::like(model.net.params, cfg.primal_lr);
    Rng batch_rng(Rng::mix(cfg.seed, 0xE12BULL));
    const int batch = 4 * cfg.quartets_per_batch;

    for (int step = 0; step < cfg.max_steps; ++step) {
        std::vector<const Instance*> picks(batch);
        std::vector<int> labels(batch);
        for (int i = 0; i < batch; ++i) {
            picks[i] = train[batch_rng.uniform_int(0, static_cast<int>(train.size()) - 1)];
            labels[i] = picks[i]->y;
        }
        Tape t;
        BoundMlp net = bind(t, model.net);
        const Tape::Id loss =
            t.cross_entropy_logits(net.forward(t, t.constant(stack_features(picks))), labels);
        t.backward(loss);
        std::vector<Tensor> grads = collect_grads(t, net);
        adam_step(model.net.params, grads, adam);
    }
    return model;
}

Prediction erm_predict(const std::vector<double>& x, const ErmModel& model) {
    const std::vector<double> logits = model.net.forward(x);
    double score = 1.0 / (1.0 + std::exp(logits[0] - logits[1]));
    score = std::min(std::max(score, 1e-15), 1.0 - 1e-15);
    return Prediction{score > 0.5 ? 1 : 0, score};
}

// ---------------------------------------------------------------- protocol

namespace {

std::vector<int> heldout_ids(const ExperimentConfig& cfg) {
    if (cfg.rotate_all) return {0, 1, 2, 3, 4, 5};
    return {cfg.heldout};
}

void fill_embeddings(CellResult* cell, const Dataset& ds, const ModelParams& model) {
    cell->embeddings.reserve(ds.instances.size());
    for (const Instance& inst : ds.instances) {
        EmbeddingRow row;
        row.split = inst.domain == ds.heldout ? "test" : "train";
        row.domain = inst.domain;
        row.a = inst.a;
        row.y = inst.y;
        const Embedding e = embed(inst.x, inst.a, model);
        row.content = e.content;
        row.fair_content = e.fair_content;
        cell->embeddings.push_back(std::move(row));
    }
}

void aggregate(RunResult* run) {
    auto metric_values = [](const CellResult& c, const std::string& name) {
        if (name == "accuracy") return c.report.avg.accuracy_pct;
        if (name == "delta_dp") return c.report.avg.delta_dp;
        if (name == "auc_fair") return c.report.avg.auc_fair;
        return c.report.avg.consistency;
    };
    static const char* kMetrics[] = {"accuracy", "delta_dp", "auc_fair", "consistency"};

    std::map<int, std::vector<const CellResult*>> by_heldout;
    std::vector<const CellResult*> all_ok;
    for (const CellResult& c : run->cells) {
        if (!c.ok) {
            ++run->failed_cells;
            continue;
        }
        by_heldout[c.heldout].push_back(&c);
        all_ok.push_back(&c);
    }
    auto stat_of = [&](const std::vector<const CellResult*>& cells, const std::string& m) {
        Stat s;
        if (cells.empty()) return s;
        for (const CellResult* c : cells) s.mean += metric_values(*c, m);
        s.mean /= cells.size();
        for (const CellResult* c : cells) {
            const double d = metric_values(*c, m) - s.mean;
            s.std += d * d;
        }
        s.std = std::sqrt(s.std / cells.size());  // population formula
        return s;
    };
    for (const auto& [dom, cells] : by_heldout)
        for (const char* m : kMetrics) run->per_heldout[dom][m] = stat_of(cells, m);
    for (const char* m : kMetrics) run->overall[m] = stat_of(all_ok, m);
}

RunResult run_protocol(const ExperimentConfig& cfg, bool erm) {
    cfg.validate();
    RunResult run;
    run.name = erm ? "erm" : ("flair_" + cfg.variant);
    bool embedded_once = false;
    for (int heldout : heldout_ids(cfg)) {
        for (std::uint64_t seed : cfg.seeds) {
            CellResult cell;
            cell.heldout = heldout;
            cell.seed = seed;
            try {
                Dataset ds = make_benchmark(seed, cfg.gen);
                ds.heldout = heldout;
                TrainerConfig tcfg = cfg.trainer;
                tcfg.seed = seed;
                apply_variant(&tcfg, erm ? "full" : cfg.variant);

                PredictFn predict_fn;
                if (erm) {
                    const ErmModel model = train_erm(ds, tcfg);
                    predict_fn = [model](const Instance& inst) {
                        const Prediction p = erm_predict(inst.x, model);
                        return std::make_pair(p.label, p.score);
                    };
                } else {
                    TrainResult tr = train(ds, tcfg);
                    cell.history = std::move(tr.history);
                    cell.gmm = tr.model.gmm;
                    cell.quartet_relaxations = tr.quartet_relaxations;
                    if (cfg.dump_all_embeddings || !embedded_once) {
                        fill_embeddings(&cell, ds, tr.model);
                        embedded_once = true;
                    }
                    const ModelParams model = std::move(tr.model);
                    predict_fn = [model](const Instance& inst) {
                        const Prediction p = predict(inst.x, inst.a, model);
                        return std::make_pair(p.label, p.score);
                    };
                }
                const auto records = make_records(ds.test_split(), predict_fn);
                cell.report = evaluate(records, cfg.metric_k);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            run.cells.push_back(std::move(cell));
        }
    }
    aggregate(&run);
    return run;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) { return run_protocol(cfg, false); }

RunResult run_baseline_erm(const ExperimentConfig& cfg) { return run_protocol(cfg, true); }

std::vector<SweepRow> sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep_param.empty()) throw ConfigError("sweep: sweep_param not set");
    if (cfg.sweep_values.empty()) throw ConfigError("sweep: sweep_values not set");
    std::vector<SweepRow> rows;
    for (const std::string& value : cfg.sweep_values) {
        ExperimentConfig c = cfg;
        if (cfg.sweep_param == "lambda2") {
            c.trainer.lambda_fair_init = to_double("sweep_values", value);
        } else if (cfg.sweep_param == "K") {
            c.trainer.prototypes = to_int("sweep_values", value);
        } else {
            c.variant = value;
        }
        SweepRow row;
        row.param = cfg.sweep_param;
        row.value = value;
        row.result = run_experiment(c);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------- emission

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("hash_file: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return fnv1a_hex(os.str());
}

std::map<std::string, std::string> config_echo_map(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> m;
    m["n_per_domain"] = std::to_string(cfg.gen.n_per_domain);
    m["feature_dim"] = std::to_string(cfg.gen.dim);
    m["noise_sigma"] = format_double(cfg.gen.noise_sigma);
    m["sensitive_offset"] = format_double(cfg.gen.sensitive_offset);
    m["primal_lr"] = format_double(cfg.trainer.primal_lr);
    m["lambda_fair_init"] = format_double(cfg.trainer.lambda_fair_init);
    m["lambda_inv_init"] = format_double(cfg.trainer.lambda_inv_init);
    m["prototypes"] = std::to_string(cfg.trainer.prototypes);
    m["quartets_per_batch"] = std::to_string(cfg.trainer.quartets_per_batch);
    m["max_steps"] = std::to_string(cfg.trainer.max_steps);
    m["variant"] = cfg.variant;
    m["metric_k"] = std::to_string(cfg.metric_k);
    m["heldout"] = cfg.rotate_all ? std::string("all") : std::to_string(cfg.heldout);
    std::string seeds;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    m["seeds"] = seeds;
    return m;
}

namespace {

nlohmann::json stat_json(const Stat& s) {
    return nlohmann::json{{"mean", s.mean}, {"std", s.std}};
}

}  // namespace

std::string run_result_to_json(const RunResult& r, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["name"] = r.name;
    j["failed_cells"] = r.failed_cells;
    j["config_echo"] = config_echo_map(cfg);
    j["cells"] = nlohmann::json::array();
    for (const CellResult& c : r.cells) {
        nlohmann::json cj;
        cj["heldout"] = c.heldout;
        cj["seed"] = c.seed;
        cj["ok"] = c.ok;
        if (!c.ok) {
            cj["error"] = c.error;
        } else {
            cj["report"] = nlohmann::json::parse(report_to_json(c.report, {}));
            cj["quartet_relaxations"] = c.quartet_relaxations;
        }
        j["cells"].push_back(std::move(cj));
    }
    j["aggregate"]["per_heldout"] = nlohmann::json::object();
    for (const auto& [dom, stats] : r.per_heldout) {
        nlohmann::json sj;
        for (const auto& [m, s] : stats) sj[m] = stat_json(s);
        j["aggregate"]["per_heldout"][std::to_string(dom)] = std::move(sj);
    }
    for (const auto& [m, s] : r.overall) j["aggregate"]["overall"][m] = stat_json(s);
    return j.dump(2);
}

std::vector<std::string> emit_reports(const std::vector<RunResult>& results,
                                      const std::vector<SweepRow>& sweep_rows,
                                      const ExperimentConfig& cfg, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = (fs::path(outdir) / name).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("emit_reports: cannot open " + path);
        f << content;
        f.close();
        written.push_back(path);
        return path;
    };

    for (const RunResult& r : results) {
        emit("runresult_" + r.name + ".json", run_result_to_json(r, cfg));
        for (const CellResult& c : r.cells) {
            if (!c.ok) continue;
            const std::string tag = "_h" + std::to_string(c.heldout) + "_s" + std::to_string(c.seed);
            if (!c.history.empty()) {
                std::ostringstream os;
                os << "step,R_cls,R_inv,Rfair_hat,Rfair_exact,lambda1,lambda2,sum_pi_a1,sum_pi_am1\n";
                for (const StepDiagnostics& d : c.history)
                    os << d.step << ',' << format_double(d.r_cls) << ',' << format_double(d.r_inv)
                       << ',' << format_double(d.rfair_hat) << ',' << format_double(d.rfair_exact)
                       << ',' << format_double(d.lambda_inv) << ',' << format_double(d.lambda_fair)
                       << ',' << format_double(d.sum_pi_pos) << ',' << format_double(d.sum_pi_neg)
                       << "\n";
                emit("history_" + r.name + tag + ".csv", os.str());
            }
            if (!c.gmm.empty()) {
                std::ostringstream os;
                const int dim = c.gmm.neg.dim();
                os << "group,k,pi";
                for (int j = 0; j < dim; ++j) os << ",mu" << j;
                for (int j = 0; j < dim; ++j) os << ",sigma" << j;
                os << "\n";
                for (int a : {-1, 1}) {
                    const GroupGmm& g = c.gmm.group(a);
                    for (int k = 0; k < g.k(); ++k) {
                        os << a << ',' << k << ',' << format_double(g.weights.at(0, k));
                        for (int j = 0; j < dim; ++j) os << ',' << format_double(g.means.at(k, j));
                        for (int j = 0; j < dim; ++j) os << ',' << format_double(g.vars.at(k, j));
                        os << "\n";
                    }
                }
                emit("prototypes_" + r.name + tag + ".csv", os.str());
            }
            if (!c.embeddings.empty()) {
                std::ostringstream os;
                const int cdim = static_cast<int>(c.embeddings.front().content.size());
                os << "split,domain,a,y";
                for (int j = 0; j < cdim; ++j) os << ",c" << j;
                for (int j = 0; j < cdim; ++j) os << ",ctilde" << j;
                os << "\n";
                for (const EmbeddingRow& row : c.embeddings) {
                    os << row.split << ',' << row.domain << ',' << row.a << ',' << row.y;
                    for (double v : row.content) os << ',' << format_double(v);
                    for (double v : row.fair_content) os << ',' << format_double(v);
                    os << "\n";
                }
                emit("embeddings_" + r.name + tag + ".csv", os.str());
            }
        }
    }

    if (!sweep_rows.empty()) {
        std::ostringstream os;
        os << "param,value,accuracy_mean,accuracy_std,delta_dp_mean,delta_dp_std,"
              "auc_fair_mean,auc_fair_std,consistency_mean,consistency_std\n";
        for (const SweepRow& row : sweep_rows) {
            const auto& o = row.result.overall;
            os << row.param << ',' << row.value;
            for (const char* m : {"accuracy", "delta_dp", "auc_fair", "consistency"}) {
                const Stat s = o.count(m) ? o.at(m) : Stat{};
                os << ',' << format_double(s.mean) << ',' << format_double(s.std);
            }
            os << "\n";
        }
        emit("tradeoff.csv", os.str());
        for (const SweepRow& row : sweep_rows) {
            std::string tag = row.value;
            std::replace(tag.begin(), tag.end(), '.', 'p');
            emit("runresult_sweep_" + row.param + "_" + tag + ".json",
                 run_result_to_json(row.result, cfg));
        }
    }

    // manifest last: hashes of everything written; the timestamp lives only
    // here
    nlohmann::json manifest;
    {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        manifest["created_unix_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
        manifest["files"] = nlohmann::json::array();
        for (const std::string& path : written) {
            nlohmann::json fj;
            fj["path"] = std::filesystem::path(path).filename().string();
            fj["bytes"] = std::filesystem::file_size(path);
            fj["hash"] = hash_file(path);
            manifest["files"].push_back(std::move(fj));
        }
    }
    const std::string manifest_path = (fs::path(outdir) / "manifest.json").string();
    std::ofstream mf(manifest_path, std::ios::binary);
    mf << manifest.dump(2);
    mf.close();
    written.push_back(manifest_path);
    return written;
}

}  // namespace flair
