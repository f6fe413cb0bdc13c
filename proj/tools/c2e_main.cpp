// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single binary wiring ingestion, pretraining, probing, and the exports
// into reproducible workflows. Exit codes: 0 success, 2 configuration
// error, 3 numerical divergence, 4 I/O error.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "c2e/checkpoint.hpp"
#include "c2e/ingest.hpp"
#include "c2e/probe.hpp"
#include "c2e/synth.hpp"
#include "c2e/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace c2e;

namespace {

uint64_t fnv_str(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// provenance line on stderr so --json output stays parseable
void print_provenance(uint64_t config_hash, uint64_t seed) {
  std::cerr << "config_hash=" << hex64(config_hash) << " seed=" << seed << "\n";
}

struct CommonFlags {
  bool json = false;
};

void emit(const CommonFlags& flags, const json& summary, const std::string& text) {
  if (flags.json)
    std::cout << summary.dump(2) << "\n";
  else
    std::cout << text;
}

C2EConfig resolve_config(const std::string& config_path, uint64_t* seed_override,
                         long steps_override, int baseline_override) {
  C2EConfig cfg = config_path.empty() ? C2EConfig{} : C2EConfig::load(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (steps_override >= 0) cfg.steps = static_cast<size_t>(steps_override);
  if (baseline_override >= 0) cfg.baseline_vit = baseline_override != 0;
  cfg.validate();
  return cfg;
}

void write_run_artifacts(const std::string& out_dir, const TrainState& state,
                         const TrainResult& result) {
  fs::create_directories(out_dir);
  state.cfg.save((fs::path(out_dir) / "resolved_config.json").string());
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.rows,
                    state.cfg.depth);
  save_checkpoint((fs::path(out_dir) / "checkpoint.c2e").string(), state);
}

// Merge predicted masked patches (denormalized by target patch statistics)
// with the original visible patches, back to image space.
Image reconstruction_image(const C2EModel& model, const Image& original,
                           const MaskPlan& plan) {
  NoGradGuard ng;
  const C2EConfig& cfg = model.config();
  Tensor batch = images_to_tensor({original}, {0});
  PatchBatch pb = patchify(batch, cfg.patch_size);
  LatentState z0 = model.encoder().encode(pb, plan);
  Rng noise(0);
  Tensor pred = model.decoder().decode(z0, plan, noise, false);

  const size_t n = cfg.token_count(), d = cfg.patch_dim();
  std::vector<double> merged = pb.tokens.data();
  for (size_t tok : plan.masked) {
    const double* t = pb.tokens.data().data() + tok * d;
    double mu = 0.0, var = 0.0;
    for (size_t j = 0; j < d; ++j) mu += t[j];
    mu /= static_cast<double>(d);
    for (size_t j = 0; j < d; ++j) var += (t[j] - mu) * (t[j] - mu);
    var /= static_cast<double>(d);
    const double sigma = std::sqrt(var + 1e-6);
    for (size_t j = 0; j < d; ++j)
      merged[tok * d + j] = pred.at({0, tok, j}) * sigma + mu;
  }
  Tensor img = unpatchify(Tensor::from_data({1, n, d}, merged), cfg.image_size,
                          cfg.patch_size);
  Image out;
  out.h = cfg.image_size;
  out.w = cfg.image_size;
  out.rgb.assign(img.data().begin(), img.data().end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c2e: compression-encoder / exploration-decoder workbench"};
  app.require_subcommand(1);
  CommonFlags flags;
  app.add_flag("--json", flags.json, "machine-readable JSON summary on stdout");

  std::function<int()> action;

  // ----- synth -----
  {
    auto* cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    cmd->fallthrough();
    auto kind = std::make_shared<std::string>("shapes");
    auto n = std::make_shared<size_t>(400);
    auto seed = std::make_shared<uint64_t>(7);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--kind", *kind, "textures|shapes|phases");
    cmd->add_option("--n", *n, "image count");
    cmd->add_option("--seed", *seed, "generator seed");
    cmd->add_option("--out", *out, "output directory")->required();
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        json params{{"kind", *kind}, {"n", *n}, {"seed", *seed}};
        print_provenance(fnv_str(params.dump()), *seed);
        ImageDataset ds = synth_dataset(*kind, *n, *seed);
        save_dataset(ds, *out);
        json summary{{"command", "synth"}, {"kind", *kind}, {"n", ds.size()},
                     {"out", *out}};
        emit(flags, summary, "wrote " + std::to_string(ds.size()) + " images to " +
                                 *out + "\n");
        return 0;
      };
    });
  }

  // ----- ingest -----
  {
    auto* cmd = app.add_subcommand("ingest", "sample, hash, and dedup frame directories");
    cmd->fallthrough();
    auto dir = std::make_shared<std::string>();
    auto every_k = std::make_shared<size_t>(1);
    auto threshold = std::make_shared<int>(5);
    auto exclude_csv = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--dir", *dir, "directory of per-group frame folders")->required();
    cmd->add_option("--every-k", *every_k, "keep every k-th frame");
    cmd->add_option("--threshold", *threshold, "dedup Hamming threshold (bits)");
    cmd->add_option("--exclude", *exclude_csv, "comma-separated holdout groups");
    cmd->add_option("--out", *out, "manifest CSV path")->required();
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        json params{{"dir", *dir}, {"every_k", *every_k}, {"threshold", *threshold},
                    {"exclude", *exclude_csv}};
        print_provenance(fnv_str(params.dump()), 0);
        FrameManifest m = sample_frames(*dir, *every_k);
        m = dedup(m, *threshold);
        std::vector<std::string> holdout;
        std::stringstream ss(*exclude_csv);
        std::string g;
        while (std::getline(ss, g, ','))
          if (!g.empty()) holdout.push_back(g);
        if (!holdout.empty()) m = exclude(m, holdout);
        save_manifest_csv(m, *out);
        size_t kept = 0;
        for (const auto& e : m.entries) kept += e.kept;
        json summary{{"command", "ingest"}, {"entries", m.entries.size()},
                     {"kept", kept}, {"manifest", *out}};
        emit(flags, summary, "manifest " + *out + ": " + std::to_string(kept) + "/" +
                                 std::to_string(m.entries.size()) + " kept\n");
        return 0;
      };
    });
  }

  // ----- pretrain / resume -----
  {
    auto* cmd = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
    cmd->fallthrough();
    auto config_path = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("run");
    auto seed = std::make_shared<uint64_t>(0);
    auto has_seed = std::make_shared<bool>(false);
    auto steps = std::make_shared<long>(-1);
    auto baseline = std::make_shared<int>(-1);
    cmd->add_option("--config", *config_path, "config JSON path");
    cmd->add_option("--data", *data_path, "dataset dir or ingest manifest")->required();
    cmd->add_option("--out", *out, "run directory");
    cmd->add_option("--seed", *seed, "seed override")->each([has_seed](const std::string&) {
      *has_seed = true;
    });
    cmd->add_option("--steps", *steps, "step-count override");
    cmd->add_option("--baseline", *baseline, "1: plain-ViT baseline sublayers");
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        C2EConfig cfg = resolve_config(*config_path, *has_seed ? seed.get() : nullptr,
                                       *steps, *baseline);
        print_provenance(cfg.hash(), cfg.seed);
        ImageDataset data = load_dataset(*data_path);
        TrainState state = fresh_train_state(cfg);
        TrainResult result = train_loop(state, data);
        write_run_artifacts(*out, state, result);
        json summary{{"command", "pretrain"},
                     {"config_hash", hex64(cfg.hash())},
                     {"seed", cfg.seed},
                     {"steps", result.final_step},
                     {"initial_loss", result.initial_loss},
                     {"final_loss", result.final_loss},
                     {"checkpoint", (fs::path(*out) / "checkpoint.c2e").string()},
                     {"metrics", (fs::path(*out) / "metrics.csv").string()}};
        std::ostringstream text;
        text << "pretrained " << result.final_step << " steps, loss "
             << result.initial_loss << " -> " << result.final_loss << "\n";
        emit(flags, summary, text.str());
        return 0;
      };
    });
  }
  {
    auto* cmd = app.add_subcommand("resume", "continue training from a checkpoint");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("run_resumed");
    auto steps = std::make_shared<long>(-1);
    cmd->add_option("--ckpt", *ckpt, "checkpoint path")->required();
    cmd->add_option("--data", *data_path, "dataset dir or manifest")->required();
    cmd->add_option("--out", *out, "run directory");
    cmd->add_option("--steps", *steps, "new total step count");
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        if (*steps >= 0) state.cfg.steps = static_cast<size_t>(*steps);
        state.cfg.validate();
        print_provenance(state.cfg.hash(), state.cfg.seed);
        ImageDataset data = load_dataset(*data_path);
        TrainResult result = train_loop(state, data);
        write_run_artifacts(*out, state, result);
        json summary{{"command", "resume"},
                     {"from_step", state.step - result.final_step + state.step},
                     {"steps", state.step},
                     {"final_loss", result.final_loss},
                     {"checkpoint", (fs::path(*out) / "checkpoint.c2e").string()}};
        emit(flags, summary,
             "resumed to step " + std::to_string(state.step) + "\n");
        return 0;
      };
    });
  }

  // ----- reconstruct -----
  {
    auto* cmd = app.add_subcommand("reconstruct", "write masked-reconstruction pairs");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("recon");
    auto count = std::make_shared<size_t>(4);
    auto seed = std::make_shared<uint64_t>(1);
    cmd->add_option("--ckpt", *ckpt)->required();
    cmd->add_option("--data", *data_path)->required();
    cmd->add_option("--out", *out);
    cmd->add_option("--n", *count, "images to reconstruct");
    cmd->add_option("--seed", *seed, "mask seed");
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        print_provenance(state.cfg.hash(), *seed);
        ImageDataset data = load_dataset(*data_path);
        fs::create_directories(*out);
        const size_t n = std::min(*count, data.size());
        json files = json::array();
        for (size_t i = 0; i < n; ++i) {
          Rng mask_rng(Rng(*seed).derive(i).seed());
          MaskPlan plan =
              plan_mask(state.cfg.token_count(), state.cfg.mask_ratio, mask_rng);
          Image recon = reconstruction_image(state.model, data.images[i], plan);
          char orig_name[32], recon_name[32];
          std::snprintf(orig_name, sizeof orig_name, "orig_%03zu.ppm", i);
          std::snprintf(recon_name, sizeof recon_name, "recon_%03zu.ppm", i);
          write_ppm((fs::path(*out) / orig_name).string(), data.images[i]);
          write_ppm((fs::path(*out) / recon_name).string(), recon);
          files.push_back(recon_name);
        }
        json summary{{"command", "reconstruct"}, {"count", n}, {"out", *out},
                     {"files", files}};
        emit(flags, summary, "wrote " + std::to_string(n) + " pairs to " + *out + "\n");
        return 0;
      };
    });
  }

  // ----- probe -----
  {
    auto* cmd = app.add_subcommand("probe", "linear probe on frozen features");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto split_seed = std::make_shared<uint64_t>(1);
    auto test_frac = std::make_shared<double>(0.3);
    auto pooling = std::make_shared<std::string>("mean");
    auto report_path = std::make_shared<std::string>();
    cmd->add_option("--ckpt", *ckpt)->required();
    cmd->add_option("--data", *data_path, "labeled dataset dir")->required();
    cmd->add_option("--split-seed", *split_seed);
    cmd->add_option("--test-frac", *test_frac);
    cmd->add_option("--pooling", *pooling, "mean|token0");
    cmd->add_option("--report", *report_path, "write ProbeReport JSON here");
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        print_provenance(state.cfg.hash(), *split_seed);
        ImageDataset data = load_labeled_dir(*data_path);
        Tensor feats = extract_features(state.model, data.images, *pooling);
        ProbeSplit split = make_stratified_split(data.labels, *test_frac, *split_seed);
        ProbeReport report = linear_probe(feats, data.labels, split, "linear-probe");
        report.checkpoint_hash = file_fnv1a(*ckpt);
        if (!report_path->empty()) {
          std::ofstream out(*report_path);
          if (!out) throw IoError("probe: cannot write " + *report_path);
          out << report.to_json() << "\n";
        }
        json summary = json::parse(report.to_json());
        summary["command"] = "probe";
        std::ostringstream text;
        text << "probe accuracy " << report.accuracy << " (train " << report.train_count
             << ", test " << report.test_count << ")\n";
        emit(flags, summary, text.str());
        return 0;
      };
    });
  }

  // ----- fewshot -----
  {
    auto* cmd = app.add_subcommand("fewshot", "group-disjoint few-shot probe protocol");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto k = std::make_shared<size_t>(2);
    auto n_seeds = std::make_shared<size_t>(3);
    auto base_seed = std::make_shared<uint64_t>(1);
    cmd->add_option("--ckpt", *ckpt)->required();
    cmd->add_option("--data", *data_path, "labeled dataset dir with groups")->required();
    cmd->add_option("--k", *k, "train-side group count");
    cmd->add_option("--seeds", *n_seeds, "number of split seeds");
    cmd->add_option("--seed", *base_seed, "first split seed");
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        print_provenance(state.cfg.hash(), *base_seed);
        ImageDataset data = load_labeled_dir(*data_path);
        Tensor feats = extract_features(state.model, data.images);
        std::vector<uint64_t> seeds;
        for (size_t i = 0; i < *n_seeds; ++i) seeds.push_back(*base_seed + i);
        auto splits = make_fewshot_splits(data.groups, *k, seeds);
        json runs = json::array();
        std::ostringstream text;
        for (const auto& fs_split : splits) {
          ProbeSplit split = split_from_groups(data, fs_split);
          ProbeReport report =
              linear_probe(feats, data.labels, split,
                           "fewshot-k" + std::to_string(*k));
          report.checkpoint_hash = file_fnv1a(*ckpt);
          json run = json::parse(report.to_json());
          run["train_groups"] = fs_split.train_groups;
          runs.push_back(run);
          text << "seed " << fs_split.seed << ": accuracy " << report.accuracy << "\n";
        }
        json summary{{"command", "fewshot"}, {"k", *k}, {"runs", runs}};
        emit(flags, summary, text.str());
        return 0;
      };
    });
  }

  // ----- exports -----
  {
    auto* cmd = app.add_subcommand("export-embeddings", "per-image feature CSV");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("embeddings.csv");
    cmd->add_option("--ckpt", *ckpt)->required();
    cmd->add_option("--data", *data_path)->required();
    cmd->add_option("--out", *out);
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        print_provenance(state.cfg.hash(), state.cfg.seed);
        ImageDataset data = load_labeled_dir(*data_path);
        export_embeddings(state.model, data, *out);
        json summary{{"command", "export-embeddings"}, {"rows", data.size()},
                     {"out", *out}};
        emit(flags, summary, "wrote " + *out + "\n");
        return 0;
      };
    });
  }
  {
    auto* cmd = app.add_subcommand("export-attention", "per-head saliency PGMs");
    cmd->fallthrough();
    auto ckpt = std::make_shared<std::string>();
    auto image_path = std::make_shared<std::string>();
    auto layer = std::make_shared<size_t>(0);
    auto prefix = std::make_shared<std::string>("attention");
    cmd->add_option("--ckpt", *ckpt)->required();
    cmd->add_option("--image", *image_path, "PPM image")->required();
    cmd->add_option("--layer", *layer, "encoder layer index");
    cmd->add_option("--out-prefix", *prefix);
    cmd->callback([=, &action, &flags]() mutable {
      action = [=, &flags]() {
        TrainState state = load_checkpoint(*ckpt);
        print_provenance(state.cfg.hash(), state.cfg.seed);
        Image img = read_ppm(*image_path);
        std::vector<double> ginis =
            export_attention(state.model, img, *layer, *prefix);
        json summary{{"command", "export-attention"}, {"heads", ginis.size()},
                     {"gini", ginis}, {"out_prefix", *prefix}};
        std::ostringstream text;
        text << "wrote " << ginis.size() << " head maps (gini:";
        for (double g : ginis) text << " " << g;
        text << ")\n";
        emit(flags, summary, text.str());
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const IngestError& e) {
    std::cerr << "ingest error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
