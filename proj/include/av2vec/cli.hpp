// av2vec/cli.hpp

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

#ifndef AV2VEC_CLI_HPP_
#define AV2VEC_CLI_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace av2vec {

// Options shared by every subcommand; each command uses the subset it
// documents. Implementations throw the project error types; the binary
// turns those into messages and a non-zero exit.
struct CliOptions {
  std::string config_path;
  std::string run_dir = "run";
  bool force = false;
  std::optional<uint64_t> seed_override;

  std::string corpus_dir;
  std::string out_dir;
  std::string checkpoint;
  std::string resume;
  std::string targets_dir;
  int clusters_override = 0;  // 0 = from config
  int layer_override = 0;     // 0 = from config
};

void run_gen_data(const CliOptions& opt);
void run_pretrain(const CliOptions& opt);
void run_cluster(const CliOptions& opt);
void run_finetune(const CliOptions& opt);
void run_eval(const CliOptions& opt);

// Config keys a subcommand reads, for the --help footers.
std::vector<std::string> config_keys_for(const std::string& subcommand);

}  // namespace av2vec

#endif  // AV2VEC_CLI_HPP_
