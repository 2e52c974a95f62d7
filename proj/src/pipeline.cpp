#include "msreid/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "msreid/errors.hpp"
#include "msreid/eval.hpp"
#include "msreid/stage1.hpp"
#include "msreid/stage2.hpp"
#include "msreid/stage3.hpp"
#include "msreid/util.hpp"

namespace fs = std::filesystem;

namespace msreid {

namespace {

constexpr long kIdentityStride = 100000;  // truth = scenario_id * stride + local id

bool wants(const RunConfig& cfg, const char* stage) {
    return std::find(cfg.stages.begin(), cfg.stages.end(), stage) != cfg.stages.end();
}

std::vector<long> truth_for(const GroupedView& grouped, const Dataset& ds) {
    std::unordered_map<long, long> by_id;
    by_id.reserve(ds.records.size());
    for (const ImageRecord& r : ds.records) by_id[r.record_id] = r.truth_identity;
    std::vector<long> out;
    out.reserve(grouped.items.size());
    for (const RecordView& v : grouped.items) out.push_back(by_id.at(v.record_id));
    return out;
}

int total_clusters(const ClusterState& cs) {
    int n = 0;
    for (const auto& blocks : cs.blocks) n += blocks[0].cluster_count() + blocks[1].cluster_count();
    return n;
}

int total_outliers(const GroupedView& grouped, const ClusterState& cs) {
    int labeled = 0;
    for (const auto& blocks : cs.blocks) {
        labeled += blocks[0].non_outlier_count() + blocks[1].non_outlier_count();
    }
    return static_cast<int>(grouped.items.size()) - labeled;
}

// Record-weighted mean over (scenario, group) blocks of the pairwise F-score
// against truth identities.
double block_fscore(const GroupedView& grouped, const std::vector<long>& truth,
                    const ClusterState& cs) {
    double fsum = 0.0, wsum = 0.0;
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        for (int g = 0; g < 2; ++g) {
            const std::vector<int>& items = grouped.blocks[s][g];
            if (items.empty()) continue;
            std::vector<long> t;
            t.reserve(items.size());
            for (int i : items) t.push_back(truth[i]);
            double w = static_cast<double>(items.size());
            fsum += w * pairwise_fscore(cs.blocks[s][g].labels, t);
            wsum += w;
        }
    }
    return wsum > 0.0 ? fsum / wsum : 0.0;
}

// F-score over per-scenario labelings where a retained cluster pair merges
// its two clusters into one pseudo-identity, so cross-group pairs count.
// This is the score that moves when the cross-heterogeneous matching improves.
double merged_fscore(const GroupedView& grouped, const std::vector<long>& truth,
                     const ClusterState& cs,
                     const std::vector<std::vector<ChmPair>>& chm_diag) {
    double fsum = 0.0, wsum = 0.0;
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        int ca = cs.blocks[s][0].cluster_count();
        std::vector<int> b_to_merged(cs.blocks[s][1].cluster_count(), -1);
        if (s < chm_diag.size()) {
            for (const ChmPair& p : chm_diag[s]) {
                if (p.retained) b_to_merged[p.b] = p.a;
            }
        }
        std::vector<int> pseudo;
        std::vector<long> t;
        for (int g = 0; g < 2; ++g) {
            const std::vector<int>& items = grouped.blocks[s][g];
            const std::vector<int>& labels = cs.blocks[s][g].labels;
            for (std::size_t i = 0; i < items.size(); ++i) {
                int l = labels[i];
                int merged = -1;
                if (l >= 0) {
                    if (g == 0) merged = l;
                    else merged = b_to_merged[l] >= 0 ? b_to_merged[l] : ca + l;
                }
                pseudo.push_back(merged);
                t.push_back(truth[items[i]]);
            }
        }
        if (pseudo.empty()) continue;
        double w = static_cast<double>(pseudo.size());
        fsum += w * pairwise_fscore(pseudo, t);
        wsum += w;
    }
    return wsum > 0.0 ? fsum / wsum : 0.0;
}

std::string labels_csv(const GroupedView& grouped, const ClusterState& cs) {
    std::string out = "record_id,scenario_id,group,label\n";
    for (std::size_t i = 0; i < grouped.items.size(); ++i) {
        const GroupedView::ItemLoc& loc = grouped.loc[i];
        int label = cs.blocks[loc.scenario_index][loc.group].labels[loc.pos];
        out += std::to_string(grouped.items[i].record_id);
        out += ',';
        out += std::to_string(grouped.items[i].scenario_id);
        out += ',';
        out += loc.group == 0 ? 'a' : 'b';
        out += ',';
        out += std::to_string(label);
        out += '\n';
    }
    return out;
}

std::string pairs_json(const GroupedView& grouped, const std::vector<std::vector<ChmPair>>& diag) {
    nlohmann::json scenarios = nlohmann::json::array();
    for (std::size_t s = 0; s < diag.size(); ++s) {
        nlohmann::json pairs = nlohmann::json::array();
        for (const ChmPair& p : diag[s]) {
            pairs.push_back({{"a", p.a},
                             {"b", p.b},
                             {"consistent", p.consistent},
                             {"retained", p.retained}});
        }
        scenarios.push_back({{"scenario_id", grouped.scenario_ids[s]}, {"pairs", pairs}});
    }
    nlohmann::json j;
    j["scenarios"] = scenarios;
    return j.dump(2) + "\n";
}

void run_stages(const RunConfig& cfg) {
    const std::string dir = cfg.output_dir;

    Dataset ds;
    if (!cfg.dataset.path.empty()) {
        ds = load_dataset(cfg.dataset.path);
    } else {
        std::vector<ScenarioSpec> specs;
        for (std::size_t i = 0; i < cfg.dataset.kinds.size(); ++i) {
            ScenarioSpec sp;
            sp.scenario_id = static_cast<int>(i);
            sp.kind = cfg.dataset.kinds[i];
            sp.num_identities = cfg.dataset.identities_per_scenario;
            sp.images_per_group = cfg.dataset.images_per_group;
            sp.noise_sigma = cfg.dataset.noise_sigma;
            specs.push_back(sp);
        }
        ds = generate_dataset(specs, cfg.dataset.dims, cfg.seed);
    }
    save_dataset(ds, dir + "/dataset");

    SplitViews sv = split_and_divide(ds, cfg.eval.test_fraction, cfg.seed);
    GroupedView train = group_view(sv.train);
    GroupedView test = group_view(sv.test);
    std::vector<long> train_truth = truth_for(train, ds);
    std::vector<long> test_truth = truth_for(test, ds);
    std::fprintf(stderr, "[pipeline] %zu train / %zu test records, %zu scenarios\n",
                 train.items.size(), test.items.size(), train.scenario_ids.size());

    const int num_scenarios = static_cast<int>(train.scenario_ids.size());
    fs::create_directories(dir + "/checkpoints");
    auto ckpt = [&dir](const char* name) { return dir + "/checkpoints/" + name; };
    auto read_ckpt = [&ckpt](const char* name) {
        std::string path = ckpt(name);
        if (!fs::exists(path)) {
            throw ParameterError("missing checkpoint " + path + "; run the earlier stages first");
        }
        return read_text_file(path);
    };

    if (wants(cfg, "s1")) {
        ImageEncoder encoder(ds.dims.d_in, cfg.encoder.hidden, cfg.encoder.d_out, num_scenarios,
                             cfg.ablation.scenario_emb);
        encoder.init(cfg.seed);
        write_text_file(ckpt("encoder_init.ckpt"), encoder.snapshot());

        Stage1Config s1 = cfg.stage1;
        s1.seed = cfg.seed;
        Stage1Result res = run_stage1(train, encoder, s1, cfg.clustering);
        write_text_file(ckpt("stage1.ckpt"), encoder.snapshot());

        fs::create_directories(dir + "/labels/stage1");
        std::string csv = "epoch,mean_loss,total_clusters,outliers,fscore\n";
        for (std::size_t e = 0; e < res.epochs.size(); ++e) {
            const Stage1EpochStats& st = res.epochs[e];
            csv += std::to_string(e) + "," + format_double(st.mean_loss) + "," +
                   std::to_string(total_clusters(st.clusters)) + "," +
                   std::to_string(total_outliers(train, st.clusters)) + "," +
                   format_double(block_fscore(train, train_truth, st.clusters)) + "\n";
            write_text_file(dir + "/labels/stage1/epoch_" + std::to_string(e) + ".csv",
                            labels_csv(train, st.clusters));
        }
        // Final re-clustering gets its own row; no steps trained against it.
        csv += std::to_string(res.epochs.size()) + ",," +
               std::to_string(total_clusters(res.final_clusters)) + "," +
               std::to_string(total_outliers(train, res.final_clusters)) + "," +
               format_double(block_fscore(train, train_truth, res.final_clusters)) + "\n";
        write_text_file(dir + "/labels/stage1/epoch_" + std::to_string(res.epochs.size()) + ".csv",
                        labels_csv(train, res.final_clusters));
        write_text_file(dir + "/stage1_labels.csv", labels_csv(train, res.final_clusters));
        write_text_file(dir + "/stage1_metrics.csv", csv);
    }

    if (wants(cfg, "s2")) {
        ImageEncoder stage1_encoder = ImageEncoder::restore(read_ckpt("stage1.ckpt"));
        std::vector<Vec> label_reps = encode_view(train, stage1_encoder);
        ClusterState stage1_labels = cluster_view(train, label_reps, cfg.clustering);

        std::vector<Vec> image_reps;
        if (cfg.stage2_image_source == "stage1") {
            image_reps = label_reps;
        } else {
            ImageEncoder snapshot = ImageEncoder::restore(read_ckpt("encoder_init.ckpt"));
            image_reps = encode_view(train, snapshot);
        }

        TextEncoder text_encoder(cfg.stage2.num_tokens, cfg.stage2.d_token, cfg.encoder.d_out,
                                 cfg.seed);
        Stage2Config s2 = cfg.stage2;
        s2.seed = cfg.seed;
        Stage2Result res =
            run_stage2(train, image_reps, label_reps, stage1_labels, text_encoder, s2);
        res.bank.save(dir);

        std::string csv = "epoch,mean_loss,mean_mss,min_pair_dist2\n";
        for (std::size_t e = 0; e < res.epochs.size(); ++e) {
            const Stage2EpochStats& st = res.epochs[e];
            csv += std::to_string(e) + "," + format_double(st.mean_loss) + "," +
                   format_double(st.mean_mss) + "," + format_double(st.min_pair_dist2) + "\n";
        }
        write_text_file(dir + "/stage2_metrics.csv", csv);
    }

    if (wants(cfg, "s3")) {
        ImageEncoder encoder = ImageEncoder::restore(read_ckpt("stage1.ckpt"));
        if (!fs::exists(dir + "/text_bank.bin")) {
            throw ParameterError("missing " + dir + "/text_bank.bin; run stage s2 first");
        }
        OfflineTextBank bank = OfflineTextBank::load(dir);
        Stage3Config s3 = cfg.stage3;
        s3.seed = cfg.seed;
        Stage3Result res = run_stage3(train, encoder, bank, s3, cfg.clustering, cfg.ablation);
        write_text_file(ckpt("stage3.ckpt"), encoder.snapshot());

        fs::create_directories(dir + "/labels/stage3");
        fs::create_directories(dir + "/pairs");
        std::string csv =
            "epoch,mean_hc,mean_chc,mean_ihc,mean_tgc,mean_total,total_clusters,outliers,"
            "matched_pairs,retained_pairs,mean_u,fscore_merged\n";
        for (std::size_t e = 0; e < res.epochs.size(); ++e) {
            const Stage3EpochStats& st = res.epochs[e];
            int matched = 0;
            for (const auto& sc : st.chm_diag) matched += static_cast<int>(sc.size());
            csv += std::to_string(e) + "," + format_double(st.mean_hc) + "," +
                   format_double(st.mean_chc) + "," + format_double(st.mean_ihc) + "," +
                   format_double(st.mean_tgc) + "," + format_double(st.mean_total) + "," +
                   std::to_string(total_clusters(st.clusters)) + "," +
                   std::to_string(total_outliers(train, st.clusters)) + "," +
                   std::to_string(matched) + "," + std::to_string(st.retained_pairs) + "," +
                   format_double(st.mean_u) + "," +
                   format_double(merged_fscore(train, train_truth, st.clusters, st.chm_diag)) +
                   "\n";
            write_text_file(dir + "/labels/stage3/epoch_" + std::to_string(e) + ".csv",
                            labels_csv(train, st.clusters));
            write_text_file(dir + "/pairs/pairs_epoch_" + std::to_string(e) + ".json",
                            pairs_json(train, st.chm_diag));
        }
        write_text_file(dir + "/stage3_metrics.csv", csv);
    }

    if (wants(cfg, "eval")) {
        const char* source = fs::exists(ckpt("stage3.ckpt")) ? "stage3.ckpt" : "stage1.ckpt";
        ImageEncoder encoder = ImageEncoder::restore(read_ckpt(source));
        std::vector<Vec> reps = encode_view(test, encoder);
        EvalReport report = evaluate(test, reps, test_truth);
        report.save(dir + "/eval_report.json");
        std::fprintf(stderr, "[eval] encoder=%s overall mAP=%.4f rank1=%.4f (%d queries)\n",
                     source, report.overall.metrics.map, report.overall.metrics.rank1,
                     report.overall.metrics.queries_used);
    }
}

}  // namespace

SplitViews split_and_divide(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw ParameterError("test_fraction must be in (0,1)");
    }
    std::map<int, const ScenarioSpec*> spec_of;
    std::map<int, std::size_t> spec_index;
    for (std::size_t i = 0; i < ds.specs.size(); ++i) {
        spec_of[ds.specs[i].scenario_id] = &ds.specs[i];
        spec_index[ds.specs[i].scenario_id] = i;
    }

    SplitViews out;
    out.division_centers.resize(ds.specs.size());
    for (const ImageRecord& r : ds.records) {
        auto it = spec_of.find(r.scenario_id);
        if (it == spec_of.end()) throw ContractViolation("record with unknown scenario_id");
        int n = it->second->num_identities;
        // ceil with a nudge so exact products do not round up one extra id
        int n_test = static_cast<int>(std::ceil(test_fraction * n - 1e-9));
        if (n_test < 1) n_test = 1;
        if (n_test >= n) throw ParameterError("test_fraction leaves no training identities");
        long local = r.truth_identity - static_cast<long>(r.scenario_id) * kIdentityStride;
        RecordView v{r.record_id, r.scenario_id, r.group, &r.raw};
        if (local >= n - n_test) {
            out.test.push_back(v);
            out.test_truth.push_back(r.truth_identity);
        } else {
            out.train.push_back(v);
            out.train_truth.push_back(r.truth_identity);
        }
    }

    // Session division for scenarios whose capture tag is unobservable. Only
    // training records vote; test records join the nearest resulting center.
    for (const ScenarioSpec& sp : ds.specs) {
        if (sp.kind != ScenarioKind::clothing_change) continue;
        std::vector<std::size_t> pos;
        std::vector<Vec> reps;
        for (std::size_t i = 0; i < out.train.size(); ++i) {
            if (out.train[i].scenario_id != sp.scenario_id) continue;
            pos.push_back(i);
            reps.push_back(normalized(*out.train[i].raw));
        }
        if (reps.size() < 2) {
            throw DegenerateInputError("scenario " + std::to_string(sp.scenario_id) +
                                       ": too few training records to divide sessions");
        }
        std::uint64_t div_seed =
            derive_seed(derive_seed(seed, seed_tag::division), static_cast<std::uint64_t>(sp.scenario_id));
        bool degenerate = false;
        std::vector<int> assign = kmeans2_division(reps, div_seed, &degenerate);
        if (degenerate) {
            throw DegenerateInputError("scenario " + std::to_string(sp.scenario_id) +
                                       ": session division collapsed to one cluster");
        }
        // Relabel so the cluster holding the lowest record_id is working
        // group a; downstream must not depend on k-means label order.
        int first = assign[0];
        std::size_t dim = reps[0].size();
        std::vector<Vec> centers(2, Vec(dim, 0.0));
        std::array<int, 2> counts = {0, 0};
        for (std::size_t j = 0; j < pos.size(); ++j) {
            int wg = assign[j] == first ? 0 : 1;
            out.train[pos[j]].group = wg;
            add_scaled(centers[wg], reps[j], 1.0);
            ++counts[wg];
        }
        if (counts[0] == 0 || counts[1] == 0) {
            throw ContractViolation("non-degenerate division produced an empty side");
        }
        centers[0] = normalized(centers[0]);
        centers[1] = normalized(centers[1]);
        out.division_centers[spec_index.at(sp.scenario_id)] = centers;

        for (RecordView& v : out.test) {
            if (v.scenario_id != sp.scenario_id) continue;
            Vec unit = normalized(*v.raw);
            v.group = dot(unit, centers[0]) >= dot(unit, centers[1]) ? 0 : 1;
        }
    }
    return out;
}

int run_pipeline(RunConfig cfg) {
    try {
        cfg.validate();
        fs::create_directories(cfg.output_dir);
        fs::remove(fs::path(cfg.output_dir) / "FAILED");  // stale marker from a prior attempt
        write_text_file(cfg.output_dir + "/config.ini", cfg.to_ini());
        run_stages(cfg);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[pipeline] FAILED: %s\n", e.what());
        try {
            fs::create_directories(cfg.output_dir);
            write_text_file(cfg.output_dir + "/FAILED", std::string(e.what()) + "\n");
        } catch (...) {
            // the marker is best effort; the exit code already says failed
        }
        return 1;
    }
}

namespace {

struct ReportRow {
    std::string name;
    std::string status;  // ok | FAILED | INCOMPLETE
    std::string flags;
    std::map<int, std::pair<double, double>> metrics;  // scenario_id -> (rank1, mAP); -1 overall
};

std::string row_name(const std::string& dir) {
    fs::path p = fs::path(dir).lexically_normal();
    std::string name = p.filename().string();
    if (name.empty() || name == ".") name = dir;
    return name;
}

std::string flag_summary(const AblationFlags& f) {
    std::vector<std::string> on;
    if (f.scenario_emb) on.push_back("emb");
    if (f.mss) on.push_back("mss");
    if (f.dru) on.push_back("dru");
    if (f.chm_consistency) on.push_back("chm");
    if (f.ihm) on.push_back("ihm");
    if (on.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < on.size(); ++i) {
        if (i) out += "+";
        out += on[i];
    }
    return out;
}

}  // namespace

int emit_report(const std::vector<std::string>& run_dirs, const std::string& csv_path) {
    std::vector<ReportRow> rows;
    std::set<int> scenario_ids;
    for (const std::string& dir : run_dirs) {
        ReportRow row;
        row.name = row_name(dir);
        row.flags = "?";
        try {
            row.flags = flag_summary(RunConfig::from_ini(read_text_file(dir + "/config.ini")).ablation);
        } catch (const std::exception&) {
            // missing or unparsable config: provenance unknown but the row still renders
        }
        if (fs::exists(fs::path(dir) / "FAILED")) {
            row.status = "FAILED";
        } else if (!fs::exists(fs::path(dir) / "eval_report.json")) {
            row.status = "INCOMPLETE";
        } else {
            try {
                nlohmann::json j =
                    nlohmann::json::parse(read_text_file(dir + "/eval_report.json"));
                for (const auto& sc : j.at("scenarios")) {
                    int sid = sc.at("scenario_id").get<int>();
                    row.metrics[sid] = {sc.at("rank1").get<double>(), sc.at("mAP").get<double>()};
                    scenario_ids.insert(sid);
                }
                const auto& ov = j.at("overall");
                row.metrics[-1] = {ov.at("rank1").get<double>(), ov.at("mAP").get<double>()};
                row.status = "ok";
            } catch (const std::exception& e) {
                row.status = "INCOMPLETE";
                row.metrics.clear();
                std::fprintf(stderr, "[report] %s: unreadable eval report: %s\n", dir.c_str(),
                             e.what());
            }
        }
        rows.push_back(std::move(row));
    }

    // Human-readable table.
    std::printf("%-24s %-20s %-10s %8s %8s", "run", "flags", "status", "rank1", "mAP");
    for (int sid : scenario_ids) std::printf(" %7s%d %7s%d", "r1_s", sid, "mAP_s", sid);
    std::printf("\n");
    for (const ReportRow& row : rows) {
        std::printf("%-24s %-20s %-10s", row.name.c_str(), row.flags.c_str(), row.status.c_str());
        auto cell = [&row](int sid) {
            auto it = row.metrics.find(sid);
            if (it == row.metrics.end()) {
                std::printf(" %8s %8s", "-", "-");
            } else {
                std::printf(" %8.4f %8.4f", it->second.first, it->second.second);
            }
        };
        cell(-1);
        for (int sid : scenario_ids) cell(sid);
        std::printf("\n");
    }

    // CSV with full-precision values.
    std::string csv = "run,flags,status,overall_rank1,overall_map";
    for (int sid : scenario_ids) {
        csv += ",s" + std::to_string(sid) + "_rank1,s" + std::to_string(sid) + "_map";
    }
    csv += "\n";
    for (const ReportRow& row : rows) {
        csv += row.name + "," + row.flags + "," + row.status;
        auto cell = [&row, &csv](int sid) {
            auto it = row.metrics.find(sid);
            if (it == row.metrics.end()) {
                csv += ",,";
            } else {
                csv += "," + format_double(it->second.first) + "," + format_double(it->second.second);
            }
        };
        cell(-1);
        for (int sid : scenario_ids) cell(sid);
        csv += "\n";
    }
    if (csv_path.empty()) {
        std::printf("\n%s", csv.c_str());
    } else {
        write_text_file(csv_path, csv);
        std::printf("\ncsv written to %s\n", csv_path.c_str());
    }
    return 0;
}

}  // namespace msreid
