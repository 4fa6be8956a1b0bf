// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the synthetic task suite and a desk-scale config next to it:
//   dualsig-toydata --out data/toy && dualsig train --config data/toy/config.json --out runs/toy

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dualsig/error.hpp"
#include "dualsig/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write the synthetic proposition suite and a matching config", "dualsig-toydata"};
  std::string out;
  dualsig::SyntheticOptions o;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", o.seed, "suite seed (also the config's root seed)");
  app.add_option("--train-examples", o.train_examples, "training examples per task");
  app.add_option("--eval-examples", o.eval_examples, "held-out examples per task");
  app.add_option("--corpus-lines", o.corpus_lines, "language corpus lines");
  app.add_option("--heldout-lines", o.heldout_lines, "perplexity corpus lines");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    const std::filesystem::path dir(out);
    dualsig::write_synthetic_suite(dualsig::make_synthetic_suite(o), dir);
    std::ofstream cfg(dir / "config.json", std::ios::binary | std::ios::trunc);
    if (!cfg) throw dualsig::IoError("cannot write " + (dir / "config.json").string());
    cfg << to_json(dualsig::synthetic_desk_config(o.seed)).dump(2) << "\n";
    std::cout << "wrote " << dir.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
