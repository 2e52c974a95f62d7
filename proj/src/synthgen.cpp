#include "msreid/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msreid/errors.hpp"
#include "msreid/util.hpp"

namespace msreid {

namespace {

void validate(const std::vector<ScenarioSpec>& specs, const GenDims& dims) {
    if (specs.empty()) throw ParameterError("generate_dataset: no scenarios");
    if (dims.d_id < 1 || dims.d_attr < 1)
        throw ParameterError("generate_dataset: d_id and d_attr must be positive");
    if (dims.d_in < dims.d_id + dims.d_attr)
        throw ParameterError("generate_dataset: d_in < d_id + d_attr");
    std::set<int> ids;
    for (const auto& s : specs) {
        if (s.num_identities < 1) throw ParameterError("generate_dataset: num_identities < 1");
        if (s.images_per_group < 1) throw ParameterError("generate_dataset: images_per_group < 1");
        if (s.noise_sigma < 0.0) throw ParameterError("generate_dataset: negative noise_sigma");
        if (!ids.insert(s.scenario_id).second)
            throw ParameterError("generate_dataset: duplicate scenario_id");
    }
}

}  // namespace

std::vector<Vec> spread_unit_vectors(int n, int d, RandomStream& rng) {
    if (n < 1 || d < 1) throw ParameterError("spread_unit_vectors: n and d must be positive");
    std::vector<Vec> v(n);
    for (auto& x : v) x = normalized(rng.normals(d));
    if (n == 1 || d == 1) return v;
    // p-frame descent with a high power so the WORST pair dominates the
    // gradient (plain frame potential only tames the average coherence).
    // n <= d converges toward an orthonormal set; n > d approaches the
    // frame bound for max |cos|. Steps are angular (unit gradient * step).
    const int iters = 600;
    const double step = 0.02;
    std::vector<Vec> grad(n);
    for (int it = 0; it < iters; ++it) {
        for (auto& g : grad) g.assign(d, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                double c = dot(v[i], v[j]);
                double c2 = c * c, c4 = c2 * c2;
                double w = c4 * c4 * c;  // |c|^(p-2) c with p = 10
                add_scaled(grad[i], v[j], w);
                add_scaled(grad[j], v[i], w);
            }
        }
        for (int i = 0; i < n; ++i) {
            double gn = norm(grad[i]);
            if (gn > 1e-12) add_scaled(v[i], grad[i], -step / gn);
            v[i] = normalized(v[i]);
        }
    }
    return v;
}

Mat principal_rotation(int d, double cos_angle, RandomStream& rng) {
    if (d < 1) throw ParameterError("principal_rotation: d must be positive");
    if (cos_angle < -1.0 || cos_angle > 1.0)
        throw ParameterError("principal_rotation: cos_angle outside [-1, 1]");
    Mat q = orthonormal_columns(d, d, rng);
    const double c = cos_angle;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    // R = Q B Q^T with B block-diagonal 2x2 rotations (odd d: last block is 1).
    Mat r(static_cast<std::size_t>(d), static_cast<std::size_t>(d));
    auto accumulate_outer = [&](int col_u, int col_v, double w) {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) r.at(i, j) += w * q.at(i, col_u) * q.at(j, col_v);
    };
    for (int k = 0; k + 1 < d; k += 2) {
        accumulate_outer(k, k, c);
        accumulate_outer(k + 1, k + 1, c);
        accumulate_outer(k + 1, k, s);
        accumulate_outer(k, k + 1, -s);
    }
    if (d % 2 == 1) accumulate_outer(d - 1, d - 1, 1.0);
    return r;
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::modality: return "modality";
        case ScenarioKind::clothing_change: return "clothing_change";
        case ScenarioKind::resolution: return "resolution";
    }
    throw ParameterError("unknown scenario kind");
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "modality") return ScenarioKind::modality;
    if (s == "clothing_change") return ScenarioKind::clothing_change;
    if (s == "resolution") return ScenarioKind::resolution;
    throw DecodeError("unknown scenario kind: '" + s + "'");
}

Vec apply_heterogeneity(const Vec& base, ScenarioKind kind, int group, const GenDims& dims,
                        const ScenarioTransforms& transforms, RandomStream& rng) {
    if (static_cast<int>(base.size()) != dims.d_in)
        throw ShapeError("apply_heterogeneity: base size != d_in");
    if (group != 0 && group != 1) throw ParameterError("apply_heterogeneity: group not in {0,1}");
    Vec out = base;
    if (kind == ScenarioKind::clothing_change) {
        // Sessions sit at +/- the session mean so 2-means can recover them
        // while the shared component each record carries stays small (the
        // between-session separation is twice the per-session offset).
        if (static_cast<int>(transforms.clothing_shift.size()) != dims.d_attr)
            throw ShapeError("apply_heterogeneity: clothing_shift size != d_attr");
        if (group == 0) {
            for (int i = 0; i < dims.d_attr; ++i) out[dims.d_id + i] += transforms.clothing_shift[i];
        } else {
            for (int i = 0; i < dims.d_attr; ++i)
                out[dims.d_id + i] =
                    -transforms.clothing_shift[i] + kClothingResample * rng.normal();
        }
        return out;
    }
    if (group == 0) return out;
    switch (kind) {
        case ScenarioKind::modality:
            for (int i = 0; i < dims.d_attr; ++i) out[dims.d_id + i] = 0.0;
            break;
        case ScenarioKind::clothing_change:
            break;  // handled above
        case ScenarioKind::resolution: {
            if (transforms.res_basis.rows != static_cast<std::size_t>(dims.d_in))
                throw ShapeError("apply_heterogeneity: res_basis rows != d_in");
            Vec coeffs = mat_t_vec(transforms.res_basis, out);
            out = mat_vec(transforms.res_basis, coeffs);
            break;
        }
    }
    return out;
}

Dataset generate_dataset(const std::vector<ScenarioSpec>& specs, const GenDims& dims,
                         std::uint64_t seed, GeneratorTrace* trace) {
    validate(specs, dims);
    Dataset ds;
    ds.specs = specs;
    ds.dims = dims;
    ds.seed = seed;
    RandomStream rng(derive_seed(seed, seed_tag::dataset));
    if (trace) {
        trace->transforms.clear();
        trace->identity_latents.clear();
        trace->drifted_latents.clear();
        trace->attribute_anchors.clear();
        trace->occluded.clear();
    }

    long record_id = 0;
    const int res_rank = static_cast<int>(std::ceil(dims.d_in * kResolutionRankFraction));
    for (const auto& spec : specs) {
        ScenarioTransforms tf;
        tf.lift = orthonormal_columns(dims.d_in, dims.d_in, rng);
        if (spec.kind == ScenarioKind::resolution)
            tf.res_basis = orthonormal_columns(dims.d_in, res_rank, rng);
        if (spec.kind == ScenarioKind::clothing_change) {
            Vec dir = rng.normals(dims.d_attr);
            dir = normalized(dir);
            tf.clothing_shift.resize(dims.d_attr);
            for (int i = 0; i < dims.d_attr; ++i) tf.clothing_shift[i] = kClothingShiftNorm * dir[i];
        }

        // Spread (low-coherence) latents rather than i.i.d. Gaussians: with
        // dozens of identities in a 16-dim block, Gaussian pair cosines have
        // heavy enough tails that density clustering chains identities
        // together; a spread set caps the worst pair near the frame bound.
        std::vector<Vec> latents = spread_unit_vectors(spec.num_identities, dims.d_id, rng);
        // Group b sees every identity through one orthogonal drift whose
        // principal angles all equal acos(kGroupDriftCos): cos(z, Rz) is that
        // value for EVERY z, and mutual geometry within the group is exactly
        // preserved, so the drift widens only the cross-group gap.
        tf.id_drift = principal_rotation(dims.d_id, kGroupDriftCos, rng);
        std::vector<Vec> drifted(spec.num_identities);
        for (int id = 0; id < spec.num_identities; ++id)
            drifted[id] = mat_vec(tf.id_drift, latents[id]);
        std::vector<Vec> anchors = spread_unit_vectors(spec.num_identities, dims.d_attr, rng);
        // Attribute energy stays well below identity energy so that worst-case
        // attribute alignment between different identities cannot bridge the
        // density gap that the clustering radius relies on.
        const double id_scale = std::sqrt(static_cast<double>(dims.d_id));
        const double attr_scale = 0.5 * std::sqrt(static_cast<double>(dims.d_attr));
        for (int id = 0; id < spec.num_identities; ++id) {
            for (double& x : latents[id]) x *= id_scale;
            for (double& x : drifted[id]) x *= id_scale;
            for (double& x : anchors[id]) x *= attr_scale;
        }

        for (int id = 0; id < spec.num_identities; ++id) {
            for (int group = 0; group < 2; ++group) {
                const Vec& id_block = group == 0 ? latents[id] : drifted[id];
                for (int img = 0; img < spec.images_per_group; ++img) {
                    // Coin and replacement direction are drawn for every
                    // record so the stream stays aligned if the rate changes.
                    const bool occ = rng.uniform() < kOcclusionRate;
                    Vec occ_dir = normalized(rng.normals(dims.d_id));
                    Vec base(dims.d_in, 0.0);
                    for (int i = 0; i < dims.d_id; ++i)
                        base[i] = occ ? id_scale * occ_dir[i] : id_block[i];
                    for (int i = 0; i < dims.d_attr; ++i)
                        base[dims.d_id + i] = anchors[id][i] + kAttrJitter * rng.normal();
                    if (trace) trace->occluded.push_back(occ ? 1 : 0);
                    base = apply_heterogeneity(base, spec.kind, group, dims, tf, rng);
                    Vec raw = mat_vec(tf.lift, base);
                    if (spec.noise_sigma > 0.0)
                        for (int i = 0; i < dims.d_in; ++i) raw[i] += spec.noise_sigma * rng.normal();
                    ImageRecord rec;
                    rec.record_id = record_id++;
                    rec.scenario_id = spec.scenario_id;
                    rec.group = group;
                    rec.truth_identity = static_cast<long>(spec.scenario_id) * 100000 + id;
                    rec.raw = std::move(raw);
                    ds.records.push_back(std::move(rec));
                }
            }
        }

        if (trace) {
            trace->transforms.push_back(std::move(tf));
            trace->identity_latents.push_back(std::move(latents));
            trace->drifted_latents.push_back(std::move(drifted));
            trace->attribute_anchors.push_back(std::move(anchors));
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["seed"] = ds.seed;
    j["dims"] = {{"d_id", ds.dims.d_id}, {"d_attr", ds.dims.d_attr}, {"d_in", ds.dims.d_in}};
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : ds.specs) {
        arr.push_back({{"scenario_id", s.scenario_id},
                       {"kind", to_string(s.kind)},
                       {"num_identities", s.num_identities},
                       {"images_per_group", s.images_per_group},
                       {"noise_sigma", s.noise_sigma}});
    }
    j["scenarios"] = arr;
    write_text_file(dir + "/spec.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "record_id,scenario_id,group,truth_identity";
    for (int i = 0; i < ds.dims.d_in; ++i) csv << ",raw_" << i;
    csv << "\n";
    for (const auto& r : ds.records) {
        csv << r.record_id << "," << r.scenario_id << "," << (r.group == 0 ? 'a' : 'b') << ","
            << r.truth_identity;
        for (double v : r.raw) csv << "," << format_double(v);
        csv << "\n";
    }
    write_text_file(dir + "/records.csv", csv.str());
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    nlohmann::json j = nlohmann::json::parse(read_text_file(dir + "/spec.json"));
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.dims.d_id = j.at("dims").at("d_id").get<int>();
    ds.dims.d_attr = j.at("dims").at("d_attr").get<int>();
    ds.dims.d_in = j.at("dims").at("d_in").get<int>();
    for (const auto& s : j.at("scenarios")) {
        ScenarioSpec spec;
        spec.scenario_id = s.at("scenario_id").get<int>();
        spec.kind = scenario_kind_from_string(s.at("kind").get<std::string>());
        spec.num_identities = s.at("num_identities").get<int>();
        spec.images_per_group = s.at("images_per_group").get<int>();
        spec.noise_sigma = s.at("noise_sigma").get<double>();
        ds.specs.push_back(spec);
    }

    auto lines = read_lines(dir + "/records.csv");
    if (lines.empty()) throw DecodeError("records.csv: empty");
    const int want_fields = 4 + ds.dims.d_in;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = split_csv_line(lines[i]);
        if (static_cast<int>(f.size()) != want_fields)
            throw DecodeError("records.csv: wrong field count at line " + std::to_string(i + 1));
        ImageRecord rec;
        rec.record_id = parse_long(f[0]);
        rec.scenario_id = static_cast<int>(parse_long(f[1]));
        if (f[2] == "a") rec.group = 0;
        else if (f[2] == "b") rec.group = 1;
        else throw DecodeError("records.csv: bad group '" + f[2] + "'");
        rec.truth_identity = parse_long(f[3]);
        rec.raw.resize(ds.dims.d_in);
        for (int d = 0; d < ds.dims.d_in; ++d) rec.raw[d] = parse_double(f[4 + d]);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace msreid
