// tests/test_cli.cpp  --  drives the installed binary end to end through a
// shell, checking artifacts and exit codes.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "test_support.hpp"

namespace {

std::string bin() {
  const char* b = std::getenv("SQA_BIN");
  REQUIRE(b != nullptr);
  return b;
}

int run(const std::string& args, const std::string& capture = "/dev/null") {
  std::string cmd = bin() + " " + args + " >" + capture + " 2>&1";
  int st = std::system(cmd.c_str());
  REQUIRE(st != -1);
  REQUIRE(WIFEXITED(st));
  return WEXITSTATUS(st);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help and argument errors") {
  testsup::TempDir dir("sqa_cli_args");
  CHECK(run("--help") == 0);
  CHECK(run("features --help") == 0);
  CHECK(run("--definitely-not-a-flag") == 17);
  CHECK(run("clean") == 17);  // missing required options
  CHECK(run("clean --ratings " + dir.file("absent.csv") + " --out " + dir.file("m.csv")) == 10);
}

TEST_CASE("pipeline from simulation to evaluation") {
  testsup::TempDir dir("sqa_cli_pipe");
  const std::string audio = dir.file("audio");
  const std::string feats = dir.file("feats");

  // Simulate a small study with matching synthetic clips.
  int rc = run("simulate --n-stimuli 6 --raters 5 --trials-per-hit 3"
               " --out-ratings " + dir.file("ratings.csv") +
               " --out-truth " + dir.file("truth.csv") +
               " --out-spammers " + dir.file("spammers.txt") +
               " --audio-dir " + audio +
               " --duration-lo 3 --duration-hi 3 --seed 11");
  REQUIRE(rc == 0);
  CHECK(first_line(slurp(dir.file("ratings.csv"))) ==
        "worker_id,hit_id,trial_id,stimulus_id,condition,corpus,raw_score");
  CHECK(first_line(slurp(dir.file("truth.csv"))) == "stimulus_id,true_mos");
  CHECK(count_lines(slurp(dir.file("truth.csv"))) == 7);
  for (int i = 1; i <= 6; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "audio/syn%04d.wav", i);
    CHECK(std::ifstream(dir.file(name)).good());
  }

  // Features with a small FFT to keep the model cheap.
  rc = run("features --in-dir " + audio + " --out-dir " + feats +
           " --stats-out " + dir.file("stats.sqst") +
           " --frame-ms 16 --hop-ms 16 --fft-len 256");
  REQUIRE(rc == 0);
  for (int i = 1; i <= 6; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "feats/syn%04d.sqft", i);
    CHECK(std::ifstream(dir.file(name)).good());
  }

  // Clean the ratings; a second run must be byte-identical.
  std::string clean_args = "clean --ratings " + dir.file("ratings.csv") +
                           " --out " + dir.file("mos.csv") +
                           " --rejections " + dir.file("rej.jsonl") +
                           " --audit " + dir.file("audit.jsonl");
  REQUIRE(run(clean_args) == 0);
  CHECK(first_line(slurp(dir.file("mos.csv"))) == "stimulus_id,corpus,mos,n_ratings,std,ci95");
  std::string mos_once = slurp(dir.file("mos.csv"));
  std::string audit_once = slurp(dir.file("audit.jsonl"));
  REQUIRE(run(clean_args) == 0);
  CHECK(slurp(dir.file("mos.csv")) == mos_once);
  CHECK(slurp(dir.file("audit.jsonl")) == audit_once);

  // Train a tiny model on everything; reference and anchor stimuli carry MOS
  // but no audio, so they must be skippable.
  rc = run("train --features-dir " + feats + " --mos " + dir.file("mos.csv") +
           " --out " + dir.file("model.sqmd") + " --history " + dir.file("history.csv") +
           " --no-split --skip-missing-features"
           " --base-hidden 4 --pyramid 4 --attention-dim 4 --fc-hidden 4"
           " --epochs 2 --batch-size 4",
           dir.file("train_out.txt"));
  INFO(slurp(dir.file("train_out.txt")));
  REQUIRE(rc == 0);
  CHECK(first_line(slurp(dir.file("history.csv"))) == "epoch,train_mse,val_mse");
  CHECK(count_lines(slurp(dir.file("history.csv"))) == 3);

  // Without the skip flag the same invocation refuses the orphan labels.
  rc = run("train --features-dir " + feats + " --mos " + dir.file("mos.csv") +
           " --out " + dir.file("model2.sqmd") + " --no-split --epochs 1");
  CHECK(rc == 10);

  // Predict and evaluate.
  rc = run("predict --model " + dir.file("model.sqmd") + " --features-dir " + feats +
           " --out " + dir.file("preds.csv"));
  REQUIRE(rc == 0);
  std::string preds = slurp(dir.file("preds.csv"));
  CHECK(first_line(preds) == "stimulus_id,pred_mos");
  CHECK(count_lines(preds) == 7);

  rc = run("evaluate --preds " + dir.file("preds.csv") + " --mos " + dir.file("mos.csv") +
           " --out " + dir.file("metrics.csv") + " --jsonl " + dir.file("metrics.jsonl"),
           dir.file("eval_out.txt"));
  REQUIRE(rc == 0);
  std::string eval_out = slurp(dir.file("eval_out.txt"));
  CHECK(eval_out.find("MAE") != std::string::npos);
  CHECK(eval_out.find("SRCC") != std::string::npos);
  std::string jsonl = slurp(dir.file("metrics.jsonl"));
  CHECK(jsonl.rfind("{", 0) == 0);
  CHECK(jsonl.find("\"pcc\"") != std::string::npos);

  // A corrupted checkpoint is refused with the checksum exit code.
  std::string model_bytes = slurp(dir.file("model.sqmd"));
  model_bytes[model_bytes.size() / 2] ^= 0x40;
  std::ofstream(dir.file("model.sqmd"), std::ios::binary)
      .write(model_bytes.data(), static_cast<std::streamsize>(model_bytes.size()));
  CHECK(run("predict --model " + dir.file("model.sqmd") + " --features-dir " + feats +
            " --out " + dir.file("preds2.csv")) == 19);
}

TEST_CASE("malformed inputs map to parse errors") {
  testsup::TempDir dir("sqa_cli_parse");
  std::ofstream(dir.file("bad.csv")) << "worker,oops\n1,2\n";
  CHECK(run("clean --ratings " + dir.file("bad.csv") + " --out " + dir.file("mos.csv")) == 11);

  std::ofstream(dir.file("badmos.csv")) << "stimulus_id,corpus,mos\nx,synthetic,5\n";
  CHECK(run("evaluate --preds " + dir.file("badmos.csv") + " --mos " + dir.file("badmos.csv")) ==
        11);
}

TEST_CASE("config files feed and record options") {
  testsup::TempDir dir("sqa_cli_cfg");

  REQUIRE(run("simulate --n-stimuli 4 --out-ratings " + dir.file("r1.csv") +
              " --seed 5 --dump-config " + dir.file("cfg.json")) == 0);
  std::string cfg = slurp(dir.file("cfg.json"));
  CHECK(cfg.find("\"n-stimuli\"") != std::string::npos);
  CHECK(cfg.find("\"subcommand\": \"simulate\"") != std::string::npos);

  // The dumped file can seed a new run; explicit flags win over it.
  std::ofstream(dir.file("seed.json")) << "{\"n-stimuli\": 4, \"seed\": 5}\n";
  REQUIRE(run("simulate --config " + dir.file("seed.json") + " --out-ratings " +
              dir.file("r2.csv")) == 0);
  CHECK(slurp(dir.file("r2.csv")) == slurp(dir.file("r1.csv")));

  REQUIRE(run("simulate --config " + dir.file("seed.json") + " --seed 6 --out-ratings " +
              dir.file("r3.csv")) == 0);
  CHECK(slurp(dir.file("r3.csv")) != slurp(dir.file("r1.csv")));

  // Unknown keys are configuration errors.
  std::ofstream(dir.file("junk.json")) << "{\"n-stimuli\": 4, \"bogus-key\": 1}\n";
  CHECK(run("simulate --config " + dir.file("junk.json") + " --out-ratings " +
            dir.file("r4.csv")) == 17);
  CHECK(run("simulate --config " + dir.file("absent.json") + " --out-ratings " +
            dir.file("r5.csv")) == 10);
}
