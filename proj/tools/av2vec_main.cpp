// av2vec_main.cpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "av2vec/cli.hpp"
#include "av2vec/errors.hpp"

namespace {

std::string keys_footer(const std::string& subcommand) {
  std::ostringstream os;
  os << "Config keys read by this command:\n ";
  int col = 1;
  for (const auto& k : av2vec::config_keys_for(subcommand)) {
    if (col + static_cast<int>(k.size()) > 78) {
      os << "\n ";
      col = 1;
    }
    os << " " << k;
    col += static_cast<int>(k.size()) + 1;
  }
  return os.str();
}

void add_common(CLI::App* cmd, av2vec::CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "Run configuration (JSON)")
      ->required();
  cmd->add_option("--seed", opt.seed_override,
                  "Override the config seed (flags win over the file)");
  cmd->add_option("--run-dir", opt.run_dir,
                  "Run directory (config snapshot, metrics, checkpoints, "
                  "reports)");
  cmd->add_flag("--force", opt.force, "Overwrite existing outputs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "av2vec: audio-visual self-distillation pretraining on a synthetic "
      "paired corpus"};
  app.require_subcommand(1);

  av2vec::CliOptions opt;

  auto* gen = app.add_subcommand("gen-data",
                                 "Generate the synthetic paired corpus");
  add_common(gen, opt);
  gen->add_option("--out", opt.out_dir, "Corpus output directory")
      ->default_val("corpus");
  gen->footer(keys_footer("gen-data"));

  auto* pre = app.add_subcommand("pretrain",
                                 "Self-distillation pretraining (av2vec or "
                                 "av2vec-mlm mode)");
  add_common(pre, opt);
  pre->add_option("--corpus", opt.corpus_dir, "Corpus directory")->required();
  pre->add_option("--resume", opt.resume,
                  "Resume from a checkpoint; continues step numbering");
  pre->add_option("--targets", opt.targets_dir,
                  "Discrete-target directory (av2vec-mlm mode)");
  pre->footer(keys_footer("pretrain"));

  auto* clu = app.add_subcommand(
      "cluster", "Derive discrete targets by k-means over hidden features");
  add_common(clu, opt);
  clu->add_option("--checkpoint", opt.checkpoint, "Pretrained checkpoint")
      ->required();
  clu->add_option("--corpus", opt.corpus_dir, "Corpus directory")->required();
  clu->add_option("--out", opt.out_dir,
                  "Target output directory (default: <run-dir>/targets)");
  clu->add_option("--clusters", opt.clusters_override,
                  "Cluster count K (default: num_clusters)");
  clu->add_option("--layer", opt.layer_override,
                  "1-based transformer layer to cluster (default: middle)");
  clu->footer(keys_footer("cluster"));

  auto* fin = app.add_subcommand(
      "finetune", "Train the frame-classification probe (frozen then joint)");
  add_common(fin, opt);
  fin->add_option("--checkpoint", opt.checkpoint, "Pretrained checkpoint")
      ->required();
  fin->add_option("--corpus", opt.corpus_dir, "Corpus directory")->required();
  fin->footer(keys_footer("finetune"));

  auto* ev = app.add_subcommand(
      "eval", "Accuracy per modality condition and SNR level");
  add_common(ev, opt);
  ev->add_option("--checkpoint", opt.checkpoint,
                 "Probe checkpoint from finetune")
      ->required();
  ev->add_option("--corpus", opt.corpus_dir, "Corpus directory")->required();
  ev->footer(keys_footer("eval"));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) av2vec::run_gen_data(opt);
    if (pre->parsed()) av2vec::run_pretrain(opt);
    if (clu->parsed()) av2vec::run_cluster(opt);
    if (fin->parsed()) av2vec::run_finetune(opt);
    if (ev->parsed()) av2vec::run_eval(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
