#include "msreid/config.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "msreid/errors.hpp"
#include "msreid/util.hpp"

namespace msreid {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string bool_str(bool v) { return v ? "on" : "off"; }

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw DecodeError("config: bad boolean for " + key + ": '" + s + "'");
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ",";
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cur = trim(cur);
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

using Section = std::map<std::string, std::string>;

struct IniDoc {
    std::map<std::string, Section> sections;

    const std::string* find(const std::string& sec, const std::string& key) {
        auto s = sections.find(sec);
        if (s == sections.end()) return nullptr;
        auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        consumed.insert(sec + "." + key);
        return &k->second;
    }

    void get(const std::string& sec, const std::string& key, std::string& dst) {
        if (const std::string* v = find(sec, key)) dst = *v;
    }
    void get(const std::string& sec, const std::string& key, double& dst) {
        if (const std::string* v = find(sec, key)) dst = parse_double(*v);
    }
    void get(const std::string& sec, const std::string& key, int& dst) {
        if (const std::string* v = find(sec, key)) dst = static_cast<int>(parse_long(*v));
    }
    void get(const std::string& sec, const std::string& key, std::uint64_t& dst) {
        if (const std::string* v = find(sec, key)) {
            long long raw = parse_long(*v);
            if (raw < 0) throw DecodeError("config: " + key + " must be non-negative");
            dst = static_cast<std::uint64_t>(raw);
        }
    }
    void get(const std::string& sec, const std::string& key, bool& dst) {
        if (const std::string* v = find(sec, key)) dst = parse_bool(*v, key);
    }

    // Any key never consumed is a typo; flag it instead of ignoring.
    void check_consumed() const {
        for (const auto& [sec, kv] : sections) {
            for (const auto& [key, value] : kv) {
                (void)value;
                if (!consumed.count(sec + "." + key)) {
                    throw DecodeError("config: unknown key [" + sec + "] " + key);
                }
            }
        }
    }

  private:
    std::set<std::string> consumed;
};

IniDoc parse_ini(const std::string& text) {
    IniDoc doc;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw DecodeError("config line " + std::to_string(lineno) + ": bad section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            doc.sections[section];  // empty sections are legal
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw DecodeError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw DecodeError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (section.empty()) {
            throw DecodeError("config line " + std::to_string(lineno) + ": key before any section");
        }
        if (!doc.sections[section].emplace(key, value).second) {
            throw DecodeError("config line " + std::to_string(lineno) + ": duplicate key " + key);
        }
    }
    return doc;
}

}  // namespace

void RunConfig::validate() const {
    if (output_dir.empty()) throw ParameterError("config: output_dir is empty");
    if (stages.empty()) throw ParameterError("config: stages list is empty");
    for (const std::string& s : stages) {
        if (s != "s1" && s != "s2" && s != "s3" && s != "eval") {
            throw ParameterError("config: unknown stage '" + s + "'");
        }
    }
    if (dataset.kinds.empty()) throw ParameterError("config: dataset.kinds is empty");
    if (dataset.identities_per_scenario < 2) {
        throw ParameterError("config: identities_per_scenario must be >= 2 (train/test split)");
    }
    if (dataset.images_per_group < 1) throw ParameterError("config: images_per_group must be >= 1");
    if (dataset.noise_sigma < 0.0) throw ParameterError("config: noise_sigma must be >= 0");
    if (dataset.dims.d_id < 1 || dataset.dims.d_attr < 1) {
        throw ParameterError("config: latent dims must be >= 1");
    }
    if (dataset.dims.d_in < dataset.dims.d_id + dataset.dims.d_attr) {
        throw ParameterError("config: d_in must be >= d_id + d_attr");
    }
    if (encoder.hidden < 1 || encoder.d_out < 1) {
        throw ParameterError("config: encoder dims must be >= 1");
    }
    if (clustering.eps <= 0.0) throw ParameterError("config: clustering eps must be > 0");
    if (clustering.min_samples < 1) throw ParameterError("config: min_samples must be >= 1");
    auto check_common = [](const char* name, int epochs, int batch, double lr) {
        std::string n(name);
        if (epochs < 1) throw ParameterError("config: " + n + " epochs must be >= 1");
        if (batch < 2) throw ParameterError("config: " + n + " batch_size must be >= 2");
        if (lr <= 0.0) throw ParameterError("config: " + n + " lr must be > 0");
    };
    check_common("stage1", stage1.epochs, stage1.batch_size, stage1.lr);
    check_common("stage2", stage2.epochs, stage2.batch_size, stage2.lr);
    check_common("stage3", stage3.epochs, stage3.batch_size, stage3.lr);
    if (stage1.tau <= 0.0 || stage3.tau <= 0.0 || stage2.tau <= 0.0) {
        throw ParameterError("config: temperatures must be > 0");
    }
    if (stage1.warmup_epochs < 0) throw ParameterError("config: warmup_epochs must be >= 0");
    if (stage2.lambda_mss < 0.0) throw ParameterError("config: lambda_mss must be >= 0");
    if (stage2.kappa <= 0.0) throw ParameterError("config: kappa must be > 0");
    if (stage2.num_tokens < 1 || stage2.d_token < 1) {
        throw ParameterError("config: prompt token dims must be >= 1");
    }
    if (stage2_image_source != "snapshot" && stage2_image_source != "stage1") {
        throw ParameterError("config: stage2 image_source must be snapshot or stage1");
    }
    if (stage3.eta <= 0.0 || stage3.eta > 1.0) throw ParameterError("config: eta must be in (0,1]");
    if (stage3.alpha < 0.0 || stage3.alpha > 1.0) {
        throw ParameterError("config: alpha must be in [0,1]");
    }
    if (stage3.beta < 0.0 || stage3.beta > 1.0) throw ParameterError("config: beta must be in [0,1]");
    if (stage3.k < 1) throw ParameterError("config: k must be >= 1");
    if (stage3.lambda_tgc < 0.0) throw ParameterError("config: lambda_tgc must be >= 0");
    if (eval.test_fraction <= 0.0 || eval.test_fraction >= 1.0) {
        throw ParameterError("config: test_fraction must be in (0,1)");
    }
}

std::string RunConfig::to_ini() const {
    std::string out;
    auto line = [&out](const std::string& k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    };
    out += "[run]\n";
    line("output_dir", output_dir);
    line("seed", std::to_string(seed));
    line("stages", join(stages));

    out += "\n[dataset]\n";
    line("path", dataset.path);
    {
        std::vector<std::string> names;
        for (ScenarioKind k : dataset.kinds) names.push_back(to_string(k));
        line("kinds", join(names));
    }
    line("identities_per_scenario", std::to_string(dataset.identities_per_scenario));
    line("images_per_group", std::to_string(dataset.images_per_group));
    line("noise_sigma", format_double(dataset.noise_sigma));
    line("d_id", std::to_string(dataset.dims.d_id));
    line("d_attr", std::to_string(dataset.dims.d_attr));
    line("d_in", std::to_string(dataset.dims.d_in));

    out += "\n[encoder]\n";
    line("hidden", std::to_string(encoder.hidden));
    line("d_out", std::to_string(encoder.d_out));

    out += "\n[clustering]\n";
    line("eps", format_double(clustering.eps));
    line("min_samples", std::to_string(clustering.min_samples));

    out += "\n[stage1]\n";
    line("epochs", std::to_string(stage1.epochs));
    line("batch_size", std::to_string(stage1.batch_size));
    line("tau", format_double(stage1.tau));
    line("lr", format_double(stage1.lr));
    line("warmup_epochs", std::to_string(stage1.warmup_epochs));

    out += "\n[stage2]\n";
    line("epochs", std::to_string(stage2.epochs));
    line("batch_size", std::to_string(stage2.batch_size));
    line("lambda_mss", format_double(stage2.lambda_mss));
    line("kappa", format_double(stage2.kappa));
    line("num_tokens", std::to_string(stage2.num_tokens));
    line("d_token", std::to_string(stage2.d_token));
    line("lr", format_double(stage2.lr));
    line("tau", format_double(stage2.tau));
    line("image_source", stage2_image_source);

    out += "\n[stage3]\n";
    line("epochs", std::to_string(stage3.epochs));
    line("batch_size", std::to_string(stage3.batch_size));
    line("tau", format_double(stage3.tau));
    line("eta", format_double(stage3.eta));
    line("alpha", format_double(stage3.alpha));
    line("beta", format_double(stage3.beta));
    line("k", std::to_string(stage3.k));
    line("lambda_tgc", format_double(stage3.lambda_tgc));
    line("lr", format_double(stage3.lr));

    out += "\n[ablation]\n";
    line("scenario_emb", bool_str(ablation.scenario_emb));
    line("mss", bool_str(ablation.mss));
    line("dru", bool_str(ablation.dru));
    line("chm_consistency", bool_str(ablation.chm_consistency));
    line("ihm", bool_str(ablation.ihm));

    out += "\n[eval]\n";
    line("test_fraction", format_double(eval.test_fraction));
    return out;
}

RunConfig RunConfig::from_ini(const std::string& text) {
    IniDoc doc = parse_ini(text);
    RunConfig cfg;

    doc.get("run", "output_dir", cfg.output_dir);
    doc.get("run", "seed", cfg.seed);
    if (const std::string* v = doc.find("run", "stages")) {
        cfg.stages = split_list(*v);
    }

    doc.get("dataset", "path", cfg.dataset.path);
    if (const std::string* v = doc.find("dataset", "kinds")) {
        cfg.dataset.kinds.clear();
        for (const std::string& name : split_list(*v)) {
            cfg.dataset.kinds.push_back(scenario_kind_from_string(name));
        }
    }
    doc.get("dataset", "identities_per_scenario", cfg.dataset.identities_per_scenario);
    doc.get("dataset", "images_per_group", cfg.dataset.images_per_group);
    doc.get("dataset", "noise_sigma", cfg.dataset.noise_sigma);
    doc.get("dataset", "d_id", cfg.dataset.dims.d_id);
    doc.get("dataset", "d_attr", cfg.dataset.dims.d_attr);
    doc.get("dataset", "d_in", cfg.dataset.dims.d_in);

    doc.get("encoder", "hidden", cfg.encoder.hidden);
    doc.get("encoder", "d_out", cfg.encoder.d_out);

    doc.get("clustering", "eps", cfg.clustering.eps);
    doc.get("clustering", "min_samples", cfg.clustering.min_samples);

    doc.get("stage1", "epochs", cfg.stage1.epochs);
    doc.get("stage1", "batch_size", cfg.stage1.batch_size);
    doc.get("stage1", "tau", cfg.stage1.tau);
    doc.get("stage1", "lr", cfg.stage1.lr);
    doc.get("stage1", "warmup_epochs", cfg.stage1.warmup_epochs);

    doc.get("stage2", "epochs", cfg.stage2.epochs);
    doc.get("stage2", "batch_size", cfg.stage2.batch_size);
    doc.get("stage2", "lambda_mss", cfg.stage2.lambda_mss);
    doc.get("stage2", "kappa", cfg.stage2.kappa);
    doc.get("stage2", "num_tokens", cfg.stage2.num_tokens);
    doc.get("stage2", "d_token", cfg.stage2.d_token);
    doc.get("stage2", "lr", cfg.stage2.lr);
    doc.get("stage2", "tau", cfg.stage2.tau);
    doc.get("stage2", "image_source", cfg.stage2_image_source);

    doc.get("stage3", "epochs", cfg.stage3.epochs);
    doc.get("stage3", "batch_size", cfg.stage3.batch_size);
    doc.get("stage3", "tau", cfg.stage3.tau);
    doc.get("stage3", "eta", cfg.stage3.eta);
    doc.get("stage3", "alpha", cfg.stage3.alpha);
    doc.get("stage3", "beta", cfg.stage3.beta);
    doc.get("stage3", "k", cfg.stage3.k);
    doc.get("stage3", "lambda_tgc", cfg.stage3.lambda_tgc);
    doc.get("stage3", "lr", cfg.stage3.lr);

    doc.get("ablation", "scenario_emb", cfg.ablation.scenario_emb);
    doc.get("ablation", "mss", cfg.ablation.mss);
    doc.get("ablation", "dru", cfg.ablation.dru);
    doc.get("ablation", "chm_consistency", cfg.ablation.chm_consistency);
    doc.get("ablation", "ihm", cfg.ablation.ihm);

    doc.get("eval", "test_fraction", cfg.eval.test_fraction);

    doc.check_consumed();
    return cfg;
}

void RunConfig::apply_profile(const std::string& name) {
    if (name == "paper" || name.empty()) return;  // defaults already are the full-scale values
    if (name != "desk") throw ParameterError("unknown profile '" + name + "'");
    stage1.epochs = 15;
    stage3.epochs = 40;
    stage1.warmup_epochs = 3;
    stage3.k = 8;
    // The full-scale density radius was tuned for a pretrained vision
    // encoder's feature distribution; the desk generator's raw-cosine scale
    // sits lower, so the radius is re-centered on its separability band.
    clustering.eps = 0.4;
    // Full-scale training takes ~400 optimizer steps per epoch; the desk run
    // takes ~20. The prompt stage must still move tokens far enough to steer
    // the normalized text reps (token shift ~ ||context||), so its budget
    // scales up: higher lr and twice the epochs.
    stage2.lr = 5e-2;
    stage2.epochs = 30;
}

}  // namespace msreid
