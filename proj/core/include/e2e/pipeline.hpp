// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Corpus plumbing and the end-to-end drivers behind the command-line tool:
// manifests, feature prep, training loops for both model families, decoding,
// and scoring. All file formats are TSV, UTF-8, LF line endings.

#ifndef E2E_PIPELINE_HPP_
#define E2E_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "e2e/config.hpp"
#include "e2e/eval.hpp"
#include "e2e/features.hpp"
#include "e2e/lm.hpp"
#include "e2e/units.hpp"

namespace e2e {

// --- Manifests ---------------------------------------------------------------

struct ManifestRecord {
  std::string utt_id;
  std::string path;        // audio (.wav) or feature (.fbk) file
  std::string transcript;  // reference text; may be empty for decode-only sets
};

struct Manifest {
  std::vector<ManifestRecord> records;

  size_t size() const { return records.size(); }
  /// Unique utt_ids; with check_files, every referenced path must exist.
  void validate(bool check_files) const;

  void save(const std::string& path) const;
  static Manifest load(const std::string& path);
};

// --- Hypothesis files --------------------------------------------------------

// One line per utterance:
//   utt_id <TAB> units space-joined <TAB> acoustic <TAB> lm <TAB> unit_count
// Attention decodes append <TAB> coverage <TAB> normalized_score.
struct HypLine {
  std::string utt_id;
  std::vector<std::string> units;
  double acoustic = 0.0;
  double lm = 0.0;
  int unit_count = 0;
  std::optional<int> cov;
  std::optional<double> normalized;
};

void save_hypotheses(const std::string& path, const std::vector<HypLine>& hyps);
std::vector<HypLine> load_hypotheses(const std::string& path);

// --- Drivers -----------------------------------------------------------------

/// Extracts filterbanks for every manifest record, accumulates global CMVN
/// stats over the whole set, writes normalized features to
/// `out_dir/<utt_id>.fbk`, the stats to `cmvn_path`, and returns the
/// rewritten manifest. Parallel per utterance.
Manifest run_prep(const Manifest& in, const FbankConfig& fbank, const std::string& out_dir,
                  const std::string& cmvn_path, int threads);

/// Trains the n-gram LM on the manifest transcripts encoded with `vocab`.
NGramLM train_lm_from_manifest(const Manifest& manifest, const UnitVocabulary& vocab,
                               const Lexicon& lex, const NGramLM::TrainConfig& config);

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
  std::string final_checkpoint;
};

/// Config-driven training for either family ([model] family = ctc |
/// attention). Writes periodic checkpoints plus an optimizer sidecar for
/// bit-exact resume, logs per-epoch loss and learning rate to `log`.
TrainResult run_training(const Config& cfg, std::ostream& log);

/// Dispatches on the checkpoint header family. Decode hyperparameters come
/// from the [decode] config section. Parallel per utterance.
std::vector<HypLine> run_decode(const std::string& checkpoint_path, const Manifest& manifest,
                                const Config& cfg, int threads);

struct CorpusEval {
  EvalReport total;
  std::vector<std::pair<std::string, EvalReport>> per_utt;
};

/// Aggregates per-utterance error reports; corpus CER is edit-sum over
/// reference-length-sum. Throws on utt_id mismatch against the reference.
CorpusEval run_score(const std::vector<HypLine>& hyps, const Manifest& reference);

}  // namespace e2e

#endif  // E2E_PIPELINE_HPP_
