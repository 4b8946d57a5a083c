#pragma once

// Sample curation: score, filter, categorize, balance, and the high
// audio-visual dependency subset.

#include <array>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "avrl/judge.hpp"
#include "avrl/world.hpp"

namespace avrl {

class ManifestParseError : public std::runtime_error {
 public:
  ManifestParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DegenerateTaxonomy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleRecord {
  std::string id;
  std::string content_ref;
  std::string question;
  std::string reference_answer;
  double duration = 0.0;
  bool scored = false;
  double s_v = 0.0;
  double s_a = 0.0;
  double s_q = 0.0;
  double s_r = 0.0;
  double s_c = 0.0;
  std::string category;  // empty until categorized

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);

inline constexpr const char* kOtherCategory = "other";

// Sixteen task categories.
const std::vector<std::string>& default_taxonomy();

struct CurationConfig {
  // Weights of (s_v, s_a, s_q, s_r) in s_c.
  std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
  double required_s_r = 1.0;
  double min_s_q = 0.8;
  double min_s_c = 0.7;
  std::size_t min_category_count = 10;
  double cap_ratio = 3.0;
  // Cap every category above the cap instead of only the largest.
  bool global_cap = false;
  // Must-keep: s_a >= must_keep_s_a and s_v >= must_keep_s_v.
  double must_keep_s_a = 1.0;
  double must_keep_s_v = 1.0;
  double stage2_min_s_v = 0.7;
  double stage2_min_s_a = 0.7;
  std::vector<std::string> taxonomy = default_taxonomy();
  // Oracle categorization of synthetic task templates.
  std::map<std::string, std::string> template_labels{
      {"next-visual", "event-sequencing"},
      {"next-audio", "sound-recognition"},
      {"co-occurrence", "audio-visual-correspondence"}};

  // Throws ConfigError.
  void validate() const;
  double composite(double s_v, double s_a, double s_q, double s_r) const;
};

struct QualityScores {
  double s_v = 0.0;
  double s_a = 0.0;
  double s_q = 0.0;
  double s_r = 0.0;
};

class SampleScorer {
 public:
  virtual ~SampleScorer() = default;
  // Throws JudgeUnavailable when the record cannot be scored.
  virtual QualityScores score(const SampleRecord& record) = 0;
  // Label from the taxonomy or "other".
  virtual std::string categorize(const SampleRecord& record, const CurationConfig& cfg) = 0;
};

// Scores synthetic records from their generating task.
class OracleSampleScorer : public SampleScorer {
 public:
  explicit OracleSampleScorer(std::shared_ptr<const ContentStore> store);
  QualityScores score(const SampleRecord& record) override;
  std::string categorize(const SampleRecord& record, const CurationConfig& cfg) override;

 private:
  std::shared_ptr<const ContentStore> store_;
};

// Templated judge requests: four "quality" requests (one per dimension) and
// one "category" request carrying the taxonomy. Category replies are
// {"label": string}.
class RemoteSampleScorer : public SampleScorer {
 public:
  explicit RemoteSampleScorer(std::shared_ptr<RemoteJudger> judger,
                              std::string quality_template = "quality-v1",
                              std::string category_template = "category-v1");
  QualityScores score(const SampleRecord& record) override;
  std::string categorize(const SampleRecord& record, const CurationConfig& cfg) override;

 private:
  std::shared_ptr<RemoteJudger> judger_;
  std::string quality_template_;
  std::string category_template_;
};

// Fills scores and s_c. Unavailable judges leave the record unscored.
SampleRecord score_sample(const SampleRecord& record, SampleScorer& scorer, const CurationConfig& cfg);

std::string categorize(const SampleRecord& record, SampleScorer& scorer, const CurationConfig& cfg);

struct AuditEntry {
  std::string id;
  std::string stage;  // score | filter | prune | balance | stage2
  std::string rule;
};

// Empty when the record passes; otherwise the first violated rule.
std::string filter_violation(const SampleRecord& record, const CurationConfig& cfg);

std::vector<SampleRecord> quality_filter(const std::vector<SampleRecord>& records, const CurationConfig& cfg,
                                         std::vector<AuditEntry>* audit = nullptr);

bool must_keep(const SampleRecord& record, const CurationConfig& cfg);

// Throws DegenerateTaxonomy when fewer than two categories survive pruning.
std::vector<SampleRecord> balance_categories(const std::vector<SampleRecord>& records,
                                             const CurationConfig& cfg,
                                             std::vector<AuditEntry>* audit = nullptr);

std::vector<SampleRecord> stage2_subset(const std::vector<SampleRecord>& records, const CurationConfig& cfg,
                                        std::vector<AuditEntry>* audit = nullptr);

std::map<std::string, std::size_t> category_histogram(const std::vector<SampleRecord>& records);

struct CurationResult {
  std::vector<SampleRecord> scored;
  std::vector<SampleRecord> stage1;
  std::vector<SampleRecord> stage2;
  std::vector<AuditEntry> audit;
};

// score -> filter -> categorize -> balance -> stage-2 subset. Scoring runs
// on up to `workers` threads; results are ordered by input position.
CurationResult run_curation(const std::vector<SampleRecord>& records, SampleScorer& scorer,
                            const CurationConfig& cfg, std::size_t workers = 1);

// Sorted by id. read_manifest validates score ranges and s_c under the
// given weights; throws ManifestParseError with the 1-based line number.
void write_manifest(std::vector<SampleRecord> records, const std::string& path);
std::vector<SampleRecord> read_manifest(const std::string& path, const CurationConfig& cfg = {});

// Unscored manifest records for a synthetic corpus. A corrupt_fraction of
// records (chosen deterministically from the seed) get a wrong reference answer.
std::vector<SampleRecord> export_manifest(const std::vector<GeneratedTask>& corpus, double corrupt_fraction,
                                          std::uint64_t seed);

}  // namespace avrl
