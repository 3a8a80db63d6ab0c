#include <cstdio>
#include <stdexcept>

#include <CLI11.hpp>

#include <protofuse/errors.hpp>

#include "commands.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void add_run_flags(CLI::App* cmd, protofuse::cli::Overrides& ov) {
  cmd->add_option("--config", ov.config, "JSON run config");
  cmd->add_option("--embeddings", ov.embeddings, "embedding file (.bin or .csv)");
  cmd->add_option("--knowledge", ov.knowledge, "knowledge JSON");
  cmd->add_option("--checkpoints", ov.checkpoints, "checkpoint directory");
  cmd->add_option("--output", ov.output, "report directory");
  cmd->add_option("--seed", ov.seed, "overrides the config seed and PROTOFUSE_SEED");
  cmd->add_option("--threads", ov.threads, "evaluation workers (0 = all cores)")->check(CLI::NonNegativeNumber);
}

void add_eval_flags(CLI::App* cmd, protofuse::cli::Overrides& ov) {
  cmd->add_option("--centers", ov.centers, "true class centers JSON");
  cmd->add_option("--n-way", ov.n_way)->check(CLI::PositiveNumber);
  cmd->add_option("--k-shot", ov.k_shot)->check(CLI::PositiveNumber);
  cmd->add_option("--m-query", ov.m_query)->check(CLI::PositiveNumber);
  cmd->add_option("--episodes", ov.episodes)->check(CLI::PositiveNumber);
  cmd->add_option("--split", ov.split)->check(CLI::IsMember({"base", "val", "test"}));
  cmd->add_option("--fusion", ov.fusion)->check(CLI::IsMember({"mean", "two_step", "em", "improved_em"}));
  cmd->add_option("--setting", ov.setting)->check(CLI::IsMember({"inductive", "transductive"}));
  cmd->add_option("--n-iter", ov.n_iter)->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype completion and fusion for few-shot classification"};
  app.require_subcommand(1);

  protofuse::cli::GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic attribute-compositional dataset");
  auto& spec = gen.spec;
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_flag("--csv", gen.csv, "write embeddings as CSV");
  gen_cmd->add_option("--n-base", spec.n_base_classes)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n-novel", spec.n_novel_classes)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n-attributes", spec.n_attributes)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--attrs-per-class", spec.attrs_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--dim", spec.dim)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--samples-per-class", spec.samples_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--attr-scale", spec.attr_scale)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--class-offset-scale", spec.class_offset_scale)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--shared-offset-scale", spec.shared_offset_scale)->check(CLI::NonNegativeNumber)->capture_default_str();
  gen_cmd->add_option("--sample-noise-scale", spec.sample_noise_scale)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--incompleteness", spec.incompleteness_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen_cmd->add_option("--semantic-noise-scale", spec.semantic_noise_scale)->check(CLI::PositiveNumber)->capture_default_str();

  protofuse::cli::Overrides train_ov;
  std::string stage;
  auto* train_cmd = app.add_subcommand("train", "train one stage and write its checkpoint");
  train_cmd->add_option("stage", stage, "patnet, protocom or finetune")
      ->required()
      ->check(CLI::IsMember({"patnet", "protocom", "finetune"}));
  add_run_flags(train_cmd, train_ov);
  train_cmd->add_option("--epochs", train_ov.epochs, "epochs (patnet) or episodes (protocom, finetune)")
      ->check(CLI::NonNegativeNumber);

  protofuse::cli::Overrides eval_ov;
  auto* eval_cmd = app.add_subcommand("eval", "episodic evaluation with mean accuracy and 95% CI");
  add_run_flags(eval_cmd, eval_ov);
  add_eval_flags(eval_cmd, eval_ov);

  protofuse::cli::Overrides fid_ov;
  auto* fid_cmd = app.add_subcommand("fidelity", "cosine of estimated prototypes to class centers");
  add_run_flags(fid_cmd, fid_ov);
  add_eval_flags(fid_cmd, fid_ov);

  protofuse::cli::Overrides noise_ov;
  std::vector<double> gammas;
  auto* noise_cmd = app.add_subcommand("noise-sweep", "accuracy under association noise, retraining per level");
  add_run_flags(noise_cmd, noise_ov);
  add_eval_flags(noise_cmd, noise_ov);
  noise_cmd->add_option("--gammas", gammas, "noise levels, e.g. 0,0.1,0.3")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return protofuse::cli::gen_synthetic(gen);
    if (*train_cmd) return protofuse::cli::train(stage, train_ov);
    if (*eval_cmd) return protofuse::cli::eval(eval_ov);
    if (*fid_cmd) return protofuse::cli::fidelity(fid_ov);
    if (*noise_cmd) return protofuse::cli::noise_sweep(noise_ov, gammas);
  } catch (const protofuse::NumericalError& e) {
    std::fprintf(stderr, "protofuse: numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const protofuse::DataError& e) {
    std::fprintf(stderr, "protofuse: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "protofuse: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "protofuse: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
