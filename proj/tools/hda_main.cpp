// Command-line front end for the HDA pipeline.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hda/hda.hpp"

namespace {

using hda::json;

enum ExitCode : int { kOk = 0, kRunFailed = 1, kUsage = 2, kConfig = 3, kData = 4, kOther = 5 };

void emit(const json& j) { std::cout << j.dump() << '\n'; }

// "0.2,0.2;0.8,0.8" -> {{0.2, 0.2}, {0.8, 0.8}}
std::vector<std::vector<double>> parse_centers(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::stringstream rows(text);
  for (std::string row; std::getline(rows, row, ';');) {
    std::vector<double> c;
    std::stringstream cols(row);
    for (std::string v; std::getline(cols, v, ',');) {
      try {
        c.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw hda::ConfigError("bad center coordinate '" + v + "'");
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

hda::Mlp load_single_network(const std::string& path) {
  auto nets = hda::load_networks(path);
  if (nets.size() != 1) {
    throw hda::FormatError("'" + path + "' holds " + std::to_string(nets.size()) + " networks, expected 1");
  }
  return std::move(nets.front());
}

hda::SourceClassifier load_classifier(const std::string& path) {
  return hda::source_classifier_from_networks(hda::load_networks(path));
}

json accuracy_json(const hda::Accuracy& a) {
  return {{"accuracy", a.accuracy}, {"correct", a.correct}, {"total", a.total}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypothesis-discrepancy adversarial domain adaptation"};
  app.require_subcommand(1);

  // gen
  struct {
    std::string kind = "two_moons", out, domain = "source", centers;
    std::size_t n = 1000;
    double noise = 0.1, sigma = 0.05, rotation = 0.0, shift_noise = 0.0;
    std::vector<double> translation, channel_bias;
    std::uint64_t seed = 0, shift_seed = 0;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset, optionally shifted");
  gen_cmd->add_option("--kind", gen.kind, "two_moons or blobs")->check(CLI::IsMember({"two_moons", "blobs"}));
  gen_cmd->add_option("--n", gen.n, "Number of rows")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Two-moons Gaussian noise")->capture_default_str();
  gen_cmd->add_option("--centers", gen.centers, "Blob centers, e.g. \"0.2,0.2;0.8,0.8\"");
  gen_cmd->add_option("--sigma", gen.sigma, "Blob standard deviation")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--rotation", gen.rotation, "Rotation in radians about the centroid");
  gen_cmd->add_option("--translation", gen.translation, "Per-feature offset")->expected(-1);
  gen_cmd->add_option("--shift-noise", gen.shift_noise, "Additive Gaussian noise of the shift");
  gen_cmd->add_option("--channel-bias", gen.channel_bias, "Per-feature bias")->expected(-1);
  gen_cmd->add_option("--shift-seed", gen.shift_seed, "Seed of the shift noise");
  gen_cmd->add_option("--domain", gen.domain, "Domain tag written to the file")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset")->required();

  // import-idx
  struct {
    std::string images, labels, out, domain = "source";
  } idx;
  auto* idx_cmd = app.add_subcommand("import-idx", "Convert an IDX image/label pair to the dataset format");
  idx_cmd->add_option("--images", idx.images, "IDX image file")->required()->check(CLI::ExistingFile);
  idx_cmd->add_option("--labels", idx.labels, "IDX label file")->required()->check(CLI::ExistingFile);
  idx_cmd->add_option("--domain", idx.domain, "Domain tag")->capture_default_str();
  idx_cmd->add_option("--out", idx.out, "Output dataset")->required();

  // divergence
  hda::HdhConfig hdh;
  struct {
    std::string source, target, classifier_out;
  } div;
  auto* div_cmd = app.add_subcommand("divergence", "Estimate the proxy A-distance between two datasets");
  div_cmd->add_option("--source", div.source, "Source dataset")->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--target", div.target, "Target dataset")->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--epochs", hdh.epochs)->capture_default_str();
  div_cmd->add_option("--lr", hdh.learning_rate)->capture_default_str();
  div_cmd->add_option("--batch", hdh.batch_size)->capture_default_str();
  div_cmd->add_option("--seed", hdh.seed)->capture_default_str();
  div_cmd->add_option("--classifier-out", div.classifier_out, "Save the trained domain classifier");

  // attack
  hda::AttackConfig atk;
  struct {
    std::string classifier, source, out;
  } att;
  auto* att_cmd = app.add_subcommand("attack", "Build the adversarial domain with iterated targeted FGSM");
  att_cmd->add_option("--classifier", att.classifier, "Domain classifier model")->required()->check(CLI::ExistingFile);
  att_cmd->add_option("--source", att.source, "Source dataset")->required()->check(CLI::ExistingFile);
  att_cmd->add_option("--epsilon", atk.epsilon, "Per-step l_inf size")->capture_default_str();
  att_cmd->add_option("--steps", atk.steps)->capture_default_str();
  att_cmd->add_option("--clip-min", atk.clip_min)->capture_default_str();
  att_cmd->add_option("--clip-max", atk.clip_max)->capture_default_str();
  att_cmd->add_option("--out", att.out, "Output dataset")->required();

  // pretrain
  hda::PretrainConfig pre;
  struct {
    std::string data, out;
    std::uint64_t init_seed = 0;
    std::size_t hidden = hda::kDefaultHiddenWidth;
  } pt;
  auto* pre_cmd = app.add_subcommand("pretrain", "Train a fresh source classifier on a labeled dataset");
  pre_cmd->add_option("--data", pt.data, "Labeled dataset")->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--epochs", pre.epochs)->capture_default_str();
  pre_cmd->add_option("--lr", pre.learning_rate)->capture_default_str();
  pre_cmd->add_option("--batch", pre.batch_size)->capture_default_str();
  pre_cmd->add_option("--seed", pre.seed, "Batch order seed")->capture_default_str();
  pre_cmd->add_option("--init-seed", pt.init_seed, "Weight initialization seed")->capture_default_str();
  pre_cmd->add_option("--hidden", pt.hidden, "Hidden width")->capture_default_str();
  pre_cmd->add_option("--out", pt.out, "Output model")->required();

  // adapt
  hda::DAConfig da;
  struct {
    std::string model, source, adversarial, target, out, method = "dann", labeled = "adversarial";
  } ad;
  auto* ad_cmd = app.add_subcommand("adapt", "Unsupervised adaptation of a pretrained classifier");
  ad_cmd->add_option("--model", ad.model, "Pretrained model")->required()->check(CLI::ExistingFile);
  ad_cmd->add_option("--method", ad.method)->check(CLI::IsMember({"source_only", "dann", "mmd"}))->capture_default_str();
  ad_cmd->add_option("--labeled", ad.labeled, "Labeled domain")
      ->check(CLI::IsMember({"source", "adversarial"}))
      ->capture_default_str();
  ad_cmd->add_option("--source", ad.source, "Source dataset (with --labeled source)")->check(CLI::ExistingFile);
  ad_cmd->add_option("--adversarial", ad.adversarial, "Adversarial dataset (with --labeled adversarial)")
      ->check(CLI::ExistingFile);
  ad_cmd->add_option("--target", ad.target, "Target dataset; its labels are ignored")
      ->required()
      ->check(CLI::ExistingFile);
  ad_cmd->add_option("--epochs", da.epochs)->capture_default_str();
  ad_cmd->add_option("--lr", da.learning_rate)->capture_default_str();
  ad_cmd->add_option("--batch", da.batch_size)->capture_default_str();
  ad_cmd->add_option("--lambda", da.lambda_domain, "Final DANN reversal strength")->capture_default_str();
  ad_cmd->add_option("--mmd-weight", da.mmd_weight)->capture_default_str();
  ad_cmd->add_option("--mmd-bandwidths", da.mmd_bandwidths, "Fixed bandwidths (default: median heuristic)")
      ->expected(-1);
  ad_cmd->add_option("--seed", da.seed)->capture_default_str();
  ad_cmd->add_option("--out", ad.out, "Output model")->required();

  // eval
  struct {
    std::string model, data;
  } ev;
  auto* ev_cmd = app.add_subcommand("eval", "Accuracy of a classifier on a labeled dataset");
  ev_cmd->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);

  // run
  struct {
    std::string config, output_dir;
    std::size_t jobs = 1;
    bool resume = false;
  } run;
  auto* run_cmd = app.add_subcommand("run", "Run a configured experiment sweep");
  run_cmd->add_option("--config", run.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--jobs", run.jobs, "Parallel (benchmark, seed) units")->capture_default_str();
  run_cmd->add_flag("--resume", run.resume, "Skip runs already recorded as successful");
  run_cmd->add_option("--output-dir", run.output_dir, "Override the config's output directory");

  // report
  struct {
    std::string runs, format = "markdown";
  } rep;
  auto* rep_cmd = app.add_subcommand("report", "Print the comparison table of a run directory");
  rep_cmd->add_option("--runs", rep.runs, "Run directory")->required()->check(CLI::ExistingDirectory);
  rep_cmd->add_option("--format", rep.format)->check(CLI::IsMember({"csv", "markdown"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) {
      hda::LabeledDataset d;
      if (gen.kind == "two_moons") {
        d = hda::gen_two_moons(gen.n, gen.noise, gen.seed);
      } else {
        if (gen.centers.empty()) throw hda::ConfigError("--centers is required for blobs");
        d = hda::gen_gaussian_blobs(gen.n, parse_centers(gen.centers), gen.sigma, gen.seed);
      }
      hda::ShiftSpec shift;
      shift.rotation = gen.rotation;
      shift.translation = gen.translation;
      shift.noise_sigma = gen.shift_noise;
      shift.channel_bias = gen.channel_bias;
      shift.seed = gen.shift_seed;
      if (shift != hda::ShiftSpec{}) d = hda::apply_shift(d, shift);
      d.domain = hda::domain_tag_from_string(gen.domain);
      hda::save_dataset(d, gen.out);
      emit({{"rows", d.size()}, {"features", d.dim()}, {"classes", d.class_count}, {"out", gen.out}});
    } else if (*idx_cmd) {
      const auto d = hda::load_idx_dataset(idx.images, idx.labels, hda::domain_tag_from_string(idx.domain));
      hda::save_dataset(d, idx.out);
      emit({{"rows", d.size()}, {"features", d.dim()}, {"classes", d.class_count}, {"out", idx.out}});
    } else if (*div_cmd) {
      const auto est = hda::estimate_divergence(hda::load_dataset(div.source), hda::load_dataset(div.target), hdh);
      if (!div.classifier_out.empty()) hda::save_networks({est.classifier}, div.classifier_out);
      emit(hda::to_json(est.report));
    } else if (*att_cmd) {
      const auto h = load_single_network(att.classifier);
      const auto s = hda::load_dataset(att.source);
      const auto a = hda::generate_adversarial_domain(h, s, atk);
      hda::save_dataset(a, att.out);
      emit({{"success_before", hda::attack_success_rate(h, s.features, atk.target_domain_label)},
            {"success_after", hda::attack_success_rate(h, a.features, atk.target_domain_label)},
            {"max_perturbation", hda::max_perturbation(a.features, s.features)},
            {"budget", atk.budget()},
            {"out", att.out}});
    } else if (*pre_cmd) {
      const auto d = hda::load_dataset(pt.data);
      auto f = hda::make_source_classifier(d.dim(), std::max<std::size_t>(d.class_count, 2), pt.init_seed, pt.hidden);
      f = hda::pretrain(std::move(f), d, pre);
      hda::save_networks(f.networks(), pt.out);
      emit({{"accuracy", hda::evaluate(f, d).accuracy}, {"out", pt.out}});
    } else if (*ad_cmd) {
      const std::string& labeled_path = ad.labeled == "source" ? ad.source : ad.adversarial;
      if (labeled_path.empty()) throw hda::ConfigError("--labeled " + ad.labeled + " needs --" + ad.labeled);
      da.method = hda::da_method_from_string(ad.method);
      const auto labeled = hda::load_dataset(labeled_path);
      const auto target = hda::load_dataset(ad.target).features;  // labels dropped here
      const auto f = hda::adapt(load_classifier(ad.model), labeled, target, da);
      hda::save_networks(f.networks(), ad.out);
      emit({{"method", ad.method}, {"labeled", ad.labeled}, {"epochs", da.epochs}, {"out", ad.out}});
    } else if (*ev_cmd) {
      emit(accuracy_json(hda::evaluate(load_classifier(ev.model), hda::load_dataset(ev.data))));
    } else if (*run_cmd) {
      auto cfg = hda::load_experiment_config(run.config);
      if (!run.output_dir.empty()) cfg.output_dir = run.output_dir;
      const auto report = hda::run_experiment(cfg, {run.jobs, run.resume});
      std::cout << hda::emit_table(report, hda::TableFormat::markdown);
      if (report.failed() > 0) {
        std::cerr << report.failed() << " run(s) failed; see " << cfg.output_dir << "/" << hda::kRecordsFile << '\n';
        return kRunFailed;
      }
    } else if (*rep_cmd) {
      const auto report = hda::load_run_report(rep.runs);
      if (report.records.empty()) throw hda::InputError("no run records in '" + rep.runs + "'");
      std::cout << hda::emit_table(report, rep.format == "csv" ? hda::TableFormat::csv : hda::TableFormat::markdown);
    }
  } catch (const hda::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const hda::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hda::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
