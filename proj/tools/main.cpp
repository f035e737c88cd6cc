#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "verify.hpp"

#include "vdc/attnopt.hpp"
#include "vdc/conditioning.hpp"
#include "vdc/errors.hpp"
#include "vdc/funnel.hpp"
#include "vdc/linalg.hpp"
#include "vdc/nn.hpp"
#include "vdc/pruning.hpp"
#include "vdc/report.hpp"
#include "vdc/rng.hpp"
#include "vdc/tensor_io.hpp"
#include "vdc/toyunet.hpp"

namespace fs = std::filesystem;
using namespace vdc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariantFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

nlohmann::json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed JSON in " + path.string());
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".")
                                                      : path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

/// Emit a report to --out/report.json when given, else to stdout.
void emit_report(const Report& report, const std::optional<fs::path>& out_dir) {
    const std::string text = report.to_json();
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_text(*out_dir / "report.json", text);
    } else {
        std::cout << text;
    }
}

Nonlinearity nonlinearity_from(const std::string& name) {
    if (name == "identity") return Nonlinearity::identity;
    if (name == "relu") return Nonlinearity::relu;
    if (name == "silu") return Nonlinearity::silu;
    throw IoError("unknown nonlinearity: " + name);
}

const char* nonlinearity_name(Nonlinearity f) {
    switch (f) {
        case Nonlinearity::identity: return "identity";
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::silu: return "silu";
    }
    return "identity";
}

struct PairManifest {
    std::string kind;  // "linear_pair" | "conv_pair" | "attention"
    LinearPair linear;
    ConvPair conv;
    AttentionProjections attention;
    double attn_scale = 0.0;  // carried by merged attention manifests
};

PairManifest load_pair(const fs::path& manifest_path) {
    const nlohmann::json j = load_json_file(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    PairManifest pair;
    pair.kind = j.value("kind", "");
    auto tensor = [&](const char* key) { return read_mvdt(dir / j.at(key).get<std::string>()); };
    if (pair.kind == "linear_pair") {
        pair.linear.w1 = tensor("w1");
        pair.linear.w2 = tensor("w2");
        pair.linear.nonlinearity = nonlinearity_from(j.value("nonlinearity", "identity"));
        pair.linear.validate();
    } else if (pair.kind == "conv_pair") {
        pair.conv.k1 = tensor("k1");
        pair.conv.k2 = tensor("k2");
        pair.conv.nonlinearity = nonlinearity_from(j.value("nonlinearity", "silu"));
        pair.conv.validate();
    } else if (pair.kind == "attention") {
        pair.attention.wq = tensor("wq");
        pair.attention.wk = tensor("wk");
        pair.attention.wv = tensor("wv");
        pair.attention.wo = tensor("wo");
        pair.attention.validate();
        pair.attn_scale = j.value("attn_scale", 0.0);
    } else {
        throw IoError("pair manifest " + manifest_path.string() +
                      " has unknown kind: '" + pair.kind + "'");
    }
    return pair;
}

const char* funnel_target_name(FunnelTarget target) {
    switch (target) {
        case FunnelTarget::linear_pair: return "linear";
        case FunnelTarget::attention_qk: return "attention_qk";
        case FunnelTarget::attention_vo: return "attention_vo";
        case FunnelTarget::conv_pair: return "conv";
    }
    return "linear";
}

FunnelTarget funnel_target_from(const std::string& name) {
    if (name == "linear") return FunnelTarget::linear_pair;
    if (name == "attention_qk") return FunnelTarget::attention_qk;
    if (name == "attention_vo") return FunnelTarget::attention_vo;
    if (name == "conv") return FunnelTarget::conv_pair;
    throw IoError("unknown funnel target: " + name);
}

void save_funnel_bundle(const FunnelPair& funnel, const fs::path& dir) {
    fs::create_directories(dir);
    write_mvdt(funnel.f1, dir / "f1.mvdt");
    write_mvdt(funnel.f2, dir / "f2.mvdt");
    nlohmann::ordered_json j;
    j["kind"] = "funnel";
    j["target"] = funnel_target_name(funnel.target);
    j["fun_factor"] = funnel.fun_factor;
    j["inner_width"] = funnel.inner_width();
    j["reduced_width"] = funnel.reduced_width();
    j["f1"] = "f1.mvdt";
    j["f2"] = "f2.mvdt";
    write_text(dir / "funnel.json", j.dump(2) + "\n");
}

FunnelPair load_funnel_bundle(const fs::path& manifest_path) {
    const nlohmann::json j = load_json_file(manifest_path);
    if (j.value("kind", "") != "funnel") {
        throw IoError(manifest_path.string() + " is not a funnel manifest");
    }
    const fs::path dir = manifest_path.parent_path();
    FunnelPair funnel;
    funnel.f1 = read_mvdt(dir / j.at("f1").get<std::string>());
    funnel.f2 = read_mvdt(dir / j.at("f2").get<std::string>());
    funnel.fun_factor = j.value("fun_factor", 1.0);
    funnel.target = funnel_target_from(j.at("target").get<std::string>());
    return funnel;
}

std::string hex_input_digest(const std::vector<const Tensor*>& tensors) {
    std::uint64_t digest = 0x9E3779B97F4A7C15ull;
    for (const Tensor* t : tensors) digest ^= tensor_digest(*t);
    return digest_hex(digest);
}

// ---------------------------------------------------------------------------
// csi

struct CsiArgs {
    std::string pair_path;
    std::string target = "auto";  // qk|vo for attention pairs
    double fun_factor = 0.5;
    std::optional<fs::path> out;
};

int cmd_csi(const CsiArgs& args) {
    const PairManifest pair = load_pair(args.pair_path);
    FunnelPair funnel;
    Tensor product;
    if (pair.kind == "linear_pair") {
        funnel = csi_linear_pair(pair.linear, args.fun_factor);
        product = matmul(pair.linear.w2, pair.linear.w1);
    } else if (pair.kind == "conv_pair") {
        funnel = csi_conv_pair(pair.conv, args.fun_factor);
        product = matmul(conv_kernel_output_collection_matrix(pair.conv.k2),
                         conv_kernel_input_patch_matrix(pair.conv.k1));
    } else {
        if (args.target == "qk") {
            funnel = csi_attention_qk(pair.attention, args.fun_factor);
            product = matmul(pair.attention.wq, transpose(pair.attention.wk));
        } else if (args.target == "vo") {
            funnel = csi_value_output(pair.attention, args.fun_factor);
            product = matmul(transpose(pair.attention.wo), transpose(pair.attention.wv));
        } else {
            throw ArgumentError("attention pairs need --target qk or --target vo");
        }
    }

    // Residual against the truncated-SVD oracle of the effective product.
    Tensor left, right;
    if (pair.kind == "linear_pair") {
        left = pair.linear.w2;
        right = pair.linear.w1;
    } else if (pair.kind == "conv_pair") {
        left = conv_kernel_output_collection_matrix(pair.conv.k2);
        right = conv_kernel_input_patch_matrix(pair.conv.k1);
    } else if (args.target == "qk") {
        left = pair.attention.wq;
        right = transpose(pair.attention.wk);
    } else {
        left = transpose(pair.attention.wo);
        right = transpose(pair.attention.wv);
    }
    const Tensor effective = matmul(matmul(left, funnel.f2), matmul(funnel.f1, right));
    const std::size_t k = std::min(funnel.reduced_width(),
                                   std::min(product.rows(), product.cols()));
    const Tensor oracle = truncated_approx(product, k);
    const double vs_oracle = frobenius_norm(effective - oracle) /
                             std::max(1.0, frobenius_norm(oracle));
    const double residual = frobenius_norm(effective - product);

    if (args.out) save_funnel_bundle(funnel, *args.out);

    Report report;
    report.command = "csi";
    report.inputs_digest = hex_input_digest({&funnel.f1, &funnel.f2});
    report.metrics["fun_factor"] = funnel.fun_factor;
    report.metrics["residual_frobenius"] = residual;
    report.metrics["residual_vs_truncated_svd"] = vs_oracle;
    report.counters["reduced_width"] = funnel.reduced_width();
    report.counters["inner_width"] = funnel.inner_width();
    report.notes["target"] = funnel_target_name(funnel.target);
    report.notes["status"] = vs_oracle <= 1e-8 ? "pass" : "fail";
    emit_report(report, args.out);
    return vs_oracle <= 1e-8 ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// merge

struct MergeArgs {
    std::string pair_path;
    std::string funnel_path;
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    std::optional<fs::path> out;
};

int cmd_merge(const MergeArgs& args) {
    const PairManifest pair = load_pair(args.pair_path);
    const FunnelPair funnel = load_funnel_bundle(args.funnel_path);
    Rng rng(args.seed);
    double worst = 0.0;
    nlohmann::ordered_json merged_manifest;

    if (pair.kind == "linear_pair") {
        if (funnel.target != FunnelTarget::linear_pair) {
            throw ArgumentError("funnel target does not match the linear pair manifest");
        }
        const LinearPair merged = merge_linear(pair.linear, funnel);
        for (std::size_t t = 0; t < args.trials; ++t) {
            Tensor x({pair.linear.w1.cols(), 1});
            for (double& v : x.data()) v = rng.normal();
            worst = std::max(worst,
                             max_abs_diff(linear_pair_forward(merged, x),
                                          funneled_linear_forward(pair.linear, funnel, x)));
        }
        if (args.out) {
            fs::create_directories(*args.out);
            write_mvdt(merged.w1, *args.out / "w1.mvdt");
            write_mvdt(merged.w2, *args.out / "w2.mvdt");
            merged_manifest["kind"] = "linear_pair";
            merged_manifest["nonlinearity"] = nonlinearity_name(merged.nonlinearity);
            merged_manifest["w1"] = "w1.mvdt";
            merged_manifest["w2"] = "w2.mvdt";
        }
    } else if (pair.kind == "conv_pair") {
        if (funnel.target != FunnelTarget::conv_pair) {
            throw ArgumentError("funnel target does not match the conv pair manifest");
        }
        const ConvPair merged = merge_conv(pair.conv, funnel);
        for (std::size_t t = 0; t < args.trials; ++t) {
            Tensor latent({2, pair.conv.k1.extent(3), 8, 8});
            for (double& v : latent.data()) v = rng.normal(0.0, 0.5);
            worst = std::max(worst,
                             max_abs_diff(conv_pair_forward(merged, latent),
                                          funneled_conv_forward(pair.conv, funnel, latent)));
        }
        if (args.out) {
            fs::create_directories(*args.out);
            write_mvdt(merged.k1, *args.out / "k1.mvdt");
            write_mvdt(merged.k2, *args.out / "k2.mvdt");
            merged_manifest["kind"] = "conv_pair";
            merged_manifest["nonlinearity"] = nonlinearity_name(merged.nonlinearity);
            merged_manifest["k1"] = "k1.mvdt";
            merged_manifest["k2"] = "k2.mvdt";
        }
    } else {
        AttentionProjections merged;
        const double scale =
            pair.attn_scale > 0.0
                ? pair.attn_scale
                : 1.0 / std::sqrt(static_cast<double>(pair.attention.wq.cols()));
        if (funnel.target == FunnelTarget::attention_qk) {
            merged = merge_attention_qk(pair.attention, funnel);
            for (std::size_t t = 0; t < args.trials; ++t) {
                Tensor x({6, pair.attention.wq.rows()});
                for (double& v : x.data()) v = rng.normal();
                worst = std::max(
                    worst,
                    max_abs_diff(
                        self_attention_forward(merged, x, nullptr, nullptr, scale),
                        self_attention_forward(pair.attention, x, &funnel, nullptr,
                                               scale)));
            }
        } else if (funnel.target == FunnelTarget::attention_vo) {
            merged = merge_attention_vo(pair.attention, funnel);
            for (std::size_t t = 0; t < args.trials; ++t) {
                Tensor x({6, pair.attention.wq.rows()});
                for (double& v : x.data()) v = rng.normal();
                worst = std::max(
                    worst,
                    max_abs_diff(
                        self_attention_forward(merged, x, nullptr, nullptr, scale),
                        self_attention_forward(pair.attention, x, nullptr, &funnel,
                                               scale)));
            }
        } else {
            throw ArgumentError("funnel target does not match the attention manifest");
        }
        if (args.out) {
            fs::create_directories(*args.out);
            write_mvdt(merged.wq, *args.out / "wq.mvdt");
            write_mvdt(merged.wk, *args.out / "wk.mvdt");
            write_mvdt(merged.wv, *args.out / "wv.mvdt");
            write_mvdt(merged.wo, *args.out / "wo.mvdt");
            merged_manifest["kind"] = "attention";
            merged_manifest["attn_scale"] = scale;
            merged_manifest["wq"] = "wq.mvdt";
            merged_manifest["wk"] = "wk.mvdt";
            merged_manifest["wv"] = "wv.mvdt";
            merged_manifest["wo"] = "wo.mvdt";
        }
    }
    if (args.out) write_text(*args.out / "pair.json", merged_manifest.dump(2) + "\n");

    Report report;
    report.command = "merge";
    report.inputs_digest = hex_input_digest({&funnel.f1, &funnel.f2});
    report.metrics["max_abs_diff"] = worst;
    report.counters["trials"] = args.trials;
    report.notes["status"] = worst <= 1e-12 ? "pass" : "fail";
    emit_report(report, args.out);
    return worst <= 1e-12 ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// prune-solve

struct PruneSolveArgs {
    std::string in_path;
    std::optional<std::size_t> budget;
    std::optional<fs::path> out;
};

int cmd_prune_solve(const PruneSolveArgs& args) {
    const nlohmann::json j = load_json_file(args.in_path);
    if (!j.contains("q")) throw IoError("prune-solve input needs a \"q\" array");
    const auto q = j["q"].get<std::vector<double>>();
    std::size_t n = 0;
    if (args.budget) {
        n = *args.budget;
    } else if (j.contains("n")) {
        n = j["n"].get<std::size_t>();
    } else {
        throw ArgumentError("budget missing: pass --n or put \"n\" in the input file");
    }
    const InclusionSolution sol = solve_inclusion(q, n);
    if (sol.inputs_clamped) {
        std::cerr << "warning: non-positive importance values clamped to 1e-9\n";
    }

    // Canonical output: {"p":[...],"c":...,"t":...,"objective":...}.
    std::string out = "{\"c\": " + format_double(sol.c);
    out += ", \"objective\": " + format_double(sol.objective);
    out += ", \"p\": [";
    for (std::size_t i = 0; i < sol.p.size(); ++i) {
        if (i > 0) out += ", ";
        out += format_double(sol.p[i]);
    }
    out += "], \"t\": " + std::to_string(sol.t) + "}\n";
    if (args.out) {
        write_text(*args.out, out);
    } else {
        std::cout << out;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
    std::string in_path;
    std::optional<std::size_t> budget;
    std::uint64_t seed = 0;
    std::size_t draws = 100000;
    std::string sampler = "brewer";
    std::optional<fs::path> out;
};

int cmd_sample(const SampleArgs& args) {
    const nlohmann::json j = load_json_file(args.in_path);
    std::vector<double> p;
    std::size_t n = 0;
    if (j.contains("p")) {
        p = j["p"].get<std::vector<double>>();
    } else if (j.contains("q")) {
        const auto q = j["q"].get<std::vector<double>>();
        const std::size_t budget =
            args.budget ? *args.budget : j.at("n").get<std::size_t>();
        p = solve_inclusion(q, budget).p;
    } else {
        throw IoError("sample input needs a \"p\" or \"q\" array");
    }
    if (args.budget) {
        n = *args.budget;
    } else if (j.contains("n")) {
        n = j["n"].get<std::size_t>();
    } else {
        throw ArgumentError("budget missing: pass --n or put \"n\" in the input file");
    }

    const bool use_pps = args.sampler == "pps";
    if (!use_pps && args.sampler != "brewer") {
        throw ArgumentError("unknown sampler: " + args.sampler);
    }
    Rng rng(args.seed);
    std::vector<double> freq(p.size(), 0.0);
    for (std::size_t d = 0; d < args.draws; ++d) {
        const GateSample s = use_pps ? sample_systematic_pps(p, n, rng)
                                     : sample_fixed_size(p, n, rng);
        for (std::size_t i = 0; i < p.size(); ++i) freq[i] += s.z[i];
    }
    double worst_sigmas = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        freq[i] /= static_cast<double>(args.draws);
        const double sigma =
            std::sqrt(p[i] * (1.0 - p[i]) / static_cast<double>(args.draws));
        if (sigma > 0.0) {
            worst_sigmas = std::max(worst_sigmas, std::fabs(freq[i] - p[i]) / sigma);
        } else if (freq[i] != p[i]) {
            worst_sigmas = std::max(worst_sigmas, 1e9);  // forced unit missed
        }
    }

    Report report;
    report.command = "sample";
    report.inputs_digest = digest_hex(fnv1a64(p.data(), p.size() * sizeof(double)));
    for (std::size_t i = 0; i < p.size(); ++i) {
        report.metrics["freq[" + std::to_string(i) + "]"] = freq[i];
        report.metrics["p[" + std::to_string(i) + "]"] = p[i];
    }
    report.metrics["worst_sigmas"] = worst_sigmas;
    report.counters["draws"] = args.draws;
    report.counters["n"] = n;
    report.counters["seed"] = args.seed;
    report.notes["sampler"] = args.sampler;
    report.notes["status"] = worst_sigmas <= 4.0 ? "pass" : "fail";
    emit_report(report, args.out);
    return worst_sigmas <= 4.0 ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// toyrun

struct ToyRunArgs {
    std::string spec_path;
    std::string multiscaling;   // override when non-empty
    std::string cross_attn;     // "full" | "optimized" override
    std::string funnel_targets; // comma list qk,vo,conv
    double fun_factor = 0.5;
    std::optional<double> prune_rate;  // percent
    std::optional<std::size_t> budget;
    std::uint64_t seed = 0;
    std::optional<fs::path> dump_weights;
    std::optional<fs::path> out;
};

int cmd_toyrun(const ToyRunArgs& args) {
    std::ifstream in(args.spec_path);
    if (!in) throw IoError("cannot open " + args.spec_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ToyUNetSpec spec = ToyUNetSpec::from_json(text);
    if (!args.multiscaling.empty()) {
        nlohmann::json patch = nlohmann::json::parse(spec.to_json());
        patch["multiscaling"] = args.multiscaling;
        spec = ToyUNetSpec::from_json(patch.dump());
    }
    if (!args.cross_attn.empty()) {
        if (args.cross_attn != "full" && args.cross_attn != "optimized") {
            throw ArgumentError("--cross-attn must be full or optimized");
        }
        spec.optimized_cross_attention = args.cross_attn == "optimized";
    }

    ToyUNet net = build(spec);
    Rng rng(args.seed);

    std::size_t pruned_blocks = 0;
    if (args.prune_rate || args.budget) {
        const std::size_t blocks = temporal_block_count(net);
        const std::size_t n = args.budget
                                  ? *args.budget
                                  : budget_from_prune_rate(*args.prune_rate / 100.0, blocks);
        std::vector<double> q(blocks);
        Rng q_rng = rng.fork(1);
        for (double& v : q) v = 0.05 + 0.9 * q_rng.uniform();
        net = prune(net, q, n);
        pruned_blocks = blocks - n;
    }

    std::size_t funnels_installed = 0;
    if (!args.funnel_targets.empty()) {
        FunnelTargets targets;
        std::string rest = args.funnel_targets;
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            const std::size_t comma = rest.find(',', pos);
            const std::string item = rest.substr(
                pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (item == "qk") targets.qk = true;
            else if (item == "vo") targets.vo = true;
            else if (item == "conv") targets.conv = true;
            else if (!item.empty()) throw ArgumentError("unknown funnel target: " + item);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        funnels_installed = inject_funnels(net, args.fun_factor, targets);
        if (funnels_installed == 0) {
            std::cerr << "warning: no layers matched the requested funnel targets\n";
        }
        net = merge_funnels(net);
    }

    Rng data_rng = rng.fork(2);
    Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
    for (double& v : latent.data()) v = data_rng.normal(0.0, 0.5);
    Tensor cond({1, spec.cond_width});
    for (double& v : cond.data()) v = data_rng.normal(0.0, 0.5);

    ForwardTrace trace;
    const Tensor output = forward(net, latent, cond, &trace);
    const FlopsReport flops = count_flops(net);

    if (args.dump_weights) save_weights(net, *args.dump_weights);
    if (args.out) {
        fs::create_directories(*args.out);
        write_text(*args.out / "flops.json", flops.to_json());
    }

    Report report;
    report.command = "toyrun";
    report.inputs_digest = digest_hex(tensor_digest(latent) ^ tensor_digest(cond));
    report.notes["forward_digest"] = digest_hex(tensor_digest(output));
    report.counters["flops_total"] = flops.total();
    report.counters["softmax_ops"] = flops.total_softmax_ops();
    report.counters["internal_frames"] = trace.internal_frames;
    report.counters["params"] = count_params(net);
    report.counters["pruned_blocks"] = pruned_blocks;
    report.counters["funnels_installed"] = funnels_installed;
    report.counters["seed"] = args.seed;
    report.notes["status"] = all_finite(output) ? "pass" : "fail";
    emit_report(report, args.out);
    return all_finite(output) ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// motion

struct MotionArgs {
    std::string clip_path;
    std::size_t height = 128;
    std::size_t width = 64;
    double fps = 25.0;
    std::optional<fs::path> out;
};

int cmd_motion(const MotionArgs& args) {
    const Clip clip = load_clip(args.clip_path, args.fps);
    const MotionDescriptor desc = motion_descriptor(clip, args.height, args.width);

    std::string out = "{\"area\": " + format_double(desc.area);
    out += ", \"bucket_height\": " + std::to_string(desc.bucket_height);
    out += ", \"bucket_id_inverted\": " + std::to_string(motion_bucket_id(desc.area));
    out += ", \"bucket_width\": " + std::to_string(desc.bucket_width);
    out += ", \"singular_values\": [";
    for (std::size_t i = 0; i < desc.singular_values.size(); ++i) {
        if (i > 0) out += ", ";
        out += format_double(desc.singular_values[i]);
    }
    out += "]}\n";
    if (args.out) {
        write_text(*args.out, out);
    } else {
        std::cout << out;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
    std::string suite = "all";
    std::uint64_t seed = 0;
    bool inject_fault = false;
    bool json_only = false;
    std::optional<fs::path> out;
};

int cmd_verify(const VerifyArgs& args) {
    if (args.suite.empty()) throw ArgumentError("--suite must not be empty");
    const auto started = std::chrono::steady_clock::now();
    const std::vector<verify::CheckResult> checks =
        verify::run_suite(args.suite, {args.seed, args.inject_fault});

    Report report;
    report.command = "verify";
    report.inputs_digest = digest_hex(derive_seed(args.seed, 0));
    std::size_t failures = 0;
    for (const verify::CheckResult& check : checks) {
        if (!args.json_only) {
            std::printf("[%s] %-40s metric %.3e (bound %.3e)\n",
                        check.pass ? "PASS" : "FAIL", check.name.c_str(), check.metric,
                        check.threshold);
        }
        report.metrics[check.name] = check.metric;
        report.notes[check.name] = check.pass ? "pass" : "fail";
        if (!check.pass) ++failures;
    }
    report.counters["checks"] = checks.size();
    report.counters["failures"] = failures;
    report.counters["seed"] = args.seed;
    report.notes["suite"] = args.suite;
    report.notes["status"] = failures == 0 ? "pass" : "fail";
    emit_report(report, args.out);

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    std::cerr << "verify: " << checks.size() - failures << "/" << checks.size()
              << " checks passed in " << elapsed << " ms\n";
    return failures == 0 ? kExitOk : kExitInvariantFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compression toolkit for spatio-temporal denoising UNets"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML file");
    bool json_only = false;
    app.add_flag("--json", json_only, "suppress human-readable lines, emit JSON only");

    CsiArgs csi_args;
    CLI::App* csi = app.add_subcommand(
        "csi", "Build a coupled-singular-initialized funnel for a layer pair");
    csi->add_option("--pair", csi_args.pair_path, "pair manifest JSON")->required();
    csi->add_option("--target", csi_args.target, "qk|vo for attention pairs");
    csi->add_option("--fun-factor", csi_args.fun_factor, "width reduction factor (0,1]");
    csi->add_option("--out", csi_args.out, "output directory");

    MergeArgs merge_args;
    CLI::App* merge = app.add_subcommand(
        "merge", "Fold a funnel into its layer pair and verify equivalence");
    merge->add_option("--pair", merge_args.pair_path, "pair manifest JSON")->required();
    merge->add_option("--funnel", merge_args.funnel_path, "funnel manifest JSON")
        ->required();
    merge->add_option("--trials", merge_args.trials, "random probes");
    merge->add_option("--seed", merge_args.seed, "probe seed");
    merge->add_option("--out", merge_args.out, "output directory");

    PruneSolveArgs solve_args;
    CLI::App* solve = app.add_subcommand(
        "prune-solve", "Importances to inclusion probabilities (closed form)");
    solve->add_option("--in", solve_args.in_path, "JSON with {\"q\":[...],\"n\":k}")
        ->required();
    std::size_t solve_budget = 0;
    CLI::Option* solve_budget_opt =
        solve->add_option("--n", solve_budget, "budget override");
    solve->add_option("--out", solve_args.out, "output file (default stdout)");

    SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand(
        "sample", "Fixed-size sampling with Monte-Carlo frequency report");
    sample->add_option("--in", sample_args.in_path, "JSON with {\"p\":[...],\"n\":k}")
        ->required();
    std::size_t sample_budget = 0;
    CLI::Option* sample_budget_opt =
        sample->add_option("--n", sample_budget, "budget override");
    sample->add_option("--seed", sample_args.seed, "64-bit sampling seed");
    sample->add_option("--draws", sample_args.draws, "number of samples");
    sample->add_option("--sampler", sample_args.sampler, "brewer|pps");
    sample->add_option("--out", sample_args.out, "output directory");

    ToyRunArgs toy_args;
    CLI::App* toyrun = app.add_subcommand(
        "toyrun", "Build and run the toy UNet, reporting digest and FLOPs");
    toyrun->add_option("--spec", toy_args.spec_path, "spec JSON")->required();
    toyrun->add_option("--multiscaling", toy_args.multiscaling,
                       "none|temporal|spatial|both override");
    toyrun->add_option("--cross-attn", toy_args.cross_attn, "full|optimized override");
    toyrun->add_option("--funnels", toy_args.funnel_targets,
                       "comma list of qk,vo,conv to funnel and merge");
    toyrun->add_option("--fun-factor", toy_args.fun_factor, "funnel width factor");
    double toy_rate = 0.0;
    CLI::Option* toy_rate_opt =
        toyrun->add_option("--prune-rate", toy_rate, "percent of temporal blocks to drop");
    std::size_t toy_budget = 0;
    CLI::Option* toy_budget_opt =
        toyrun->add_option("--budget", toy_budget, "temporal blocks to keep");
    toyrun->add_option("--seed", toy_args.seed, "run seed");
    toyrun->add_option("--dump-weights", toy_args.dump_weights, "weight bundle directory");
    toyrun->add_option("--out", toy_args.out, "output directory");

    MotionArgs motion_args;
    CLI::App* motion = app.add_subcommand(
        "motion", "Singular-value motion descriptor of a clip");
    motion->add_option("--clip", motion_args.clip_path, "MVDT tensor or raw frame dir")
        ->required();
    motion->add_option("--height", motion_args.height, "bucket resolution height");
    motion->add_option("--width", motion_args.width, "bucket resolution width");
    motion->add_option("--fps", motion_args.fps, "fallback fps");
    motion->add_option("--out", motion_args.out, "output file (default stdout)");

    VerifyArgs verify_args;
    CLI::App* verify_cmd = app.add_subcommand(
        "verify", "Run the seeded invariant suites; exit 1 on any failure");
    verify_cmd->add_option("--suite", verify_args.suite,
                           "all|linalg|funnel|pruning|attnopt|toyunet|conditioning");
    verify_cmd->add_option("--seed", verify_args.seed, "suite seed");
    verify_cmd->add_flag("--inject-fault", verify_args.inject_fault,
                         "perturb one weight so the merge check fails");
    verify_cmd->add_option("--out", verify_args.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (csi->parsed()) return cmd_csi(csi_args);
        if (merge->parsed()) return cmd_merge(merge_args);
        if (solve->parsed()) {
            if (solve_budget_opt->count() > 0) solve_args.budget = solve_budget;
            return cmd_prune_solve(solve_args);
        }
        if (sample->parsed()) {
            if (sample_budget_opt->count() > 0) sample_args.budget = sample_budget;
            return cmd_sample(sample_args);
        }
        if (toyrun->parsed()) {
            if (toy_rate_opt->count() > 0) toy_args.prune_rate = toy_rate;
            if (toy_budget_opt->count() > 0) toy_args.budget = toy_budget;
            return cmd_toyrun(toy_args);
        }
        if (motion->parsed()) return cmd_motion(motion_args);
        if (verify_cmd->parsed()) {
            verify_args.json_only = json_only;
            return cmd_verify(verify_args);
        }
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ShapeError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvariantFailure;
    }
    return kExitUsage;
}
