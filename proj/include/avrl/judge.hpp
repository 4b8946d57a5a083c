#pragma once

// Soft evaluators for grounding, completeness and answers.
//
// Two backends implement the same interface: OracleJudger scores exactly
// against the symbolic world, RemoteJudger talks to a judge service over the
// /v1/judge wire protocol.

#include <chrono>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "avrl/interval.hpp"
#include "avrl/world.hpp"

namespace avrl {

class JudgeUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JudgeScore {
  double value = 0.0;
  std::optional<std::string> rationale;

  // Clamps into [0, 1]; NaN becomes 0.
  static JudgeScore clamped(double value, std::optional<std::string> rationale = std::nullopt);
};

struct Rule {
  std::string id;
  double weight = 0.0;
  std::string prompt;
};

// Ordered rules with non-negative weights summing to one.
class RuleSet {
 public:
  RuleSet() = default;
  explicit RuleSet(std::vector<Rule> rules);

  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  // Weight of the rule with this id, 0 when absent.
  double weight(std::string_view id) const;
  std::vector<std::string> prompts() const;

 private:
  std::vector<Rule> rules_;
};

// Three consistency rules (caption grounded, nothing hallucinated, specific).
RuleSet default_consistency_rules();
// Sufficiency, precision, answerability with equal weights.
RuleSet default_completeness_rules();

class Judger {
 public:
  virtual ~Judger() = default;

  virtual JudgeScore judge_consistency(const std::string& content_ref, const TimeSpan& span,
                                       const std::string& caption, const RuleSet& rules) = 0;

  virtual JudgeScore judge_completeness(const CompositeContentRef& composite,
                                        const std::string& question,
                                        const std::string& final_answer, const RuleSet& rules) = 0;

  // Multiple-choice mode (options given) is a local normalized letter match;
  // otherwise the backend's free-text scorer is used.
  JudgeScore judge_answer(const std::string& question, const std::string& prediction,
                          const std::string& reference, const std::vector<std::string>& options);

 protected:
  virtual JudgeScore judge_free_text(const std::string& question, const std::string& prediction,
                                     const std::string& reference) = 0;
};

struct CompletenessParts {
  double sufficiency = 0.0;
  double precision = 0.0;
  double answerability = 0.0;
};

// Exact scorer over symbolic content. Stateless after construction.
class OracleJudger : public Judger {
 public:
  explicit OracleJudger(std::shared_ptr<const ContentStore> store);

  // Fraction of the caption's vocabulary symbols present in the span, halved
  // when any mentioned symbol is absent.
  JudgeScore judge_consistency(const std::string& content_ref, const TimeSpan& span,
                               const std::string& caption, const RuleSet& rules) override;

  // Weighted mean of sufficiency, precision and answerability.
  JudgeScore judge_completeness(const CompositeContentRef& composite, const std::string& question,
                                const std::string& final_answer, const RuleSet& rules) override;

  CompletenessParts completeness_parts(const CompositeContentRef& composite) const;

  const ContentStore& store() const { return *store_; }

 protected:
  JudgeScore judge_free_text(const std::string& question, const std::string& prediction,
                             const std::string& reference) override;

 private:
  std::shared_ptr<const ContentStore> store_;
};

// Vocabulary symbols mentioned in a caption, deduplicated, in order.
std::vector<std::string> caption_symbols(const std::string& caption);

// ---------------------------------------------------------------------------
// Remote backend

struct JudgeRequest {
  std::string kind;  // consistency | completeness | answer | quality | category
  std::string content_ref;
  std::vector<TimeSpan> spans;
  std::optional<std::string> caption;
  std::optional<std::string> question;
  std::optional<std::string> final_answer;
  std::optional<std::string> reference;
  std::vector<std::string> rules;
  std::string template_id;
  std::optional<std::string> dimension;             // quality requests
  std::optional<std::vector<std::string>> options;  // category requests: the taxonomy

  nlohmann::json to_json() const;
  // SHA-256 of the canonical JSON body.
  std::string digest() const;
};

class TransportTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sends one request body and returns the parsed reply body. Throws
// TransportTimeout or TransportError on failure.
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual nlohmann::json post(const nlohmann::json& body, std::chrono::milliseconds timeout) = 0;
};

// POST <endpoint>/v1/judge with an optional bearer token.
class HttpJudgeTransport : public JudgeTransport {
 public:
  HttpJudgeTransport(std::string endpoint, std::string token);
  nlohmann::json post(const nlohmann::json& body, std::chrono::milliseconds timeout) override;

 private:
  std::string endpoint_;
  std::string token_;
};

// Reply cache keyed by request digest; persists as a JSONL transcript.
class JudgeCache {
 public:
  std::optional<nlohmann::json> lookup(const std::string& digest) const;
  void store(const std::string& digest, const nlohmann::json& request, const nlohmann::json& reply);
  std::size_t size() const;

  void load_transcript(const std::string& path);
  // Sorted by digest.
  void save_transcript(const std::string& path) const;

 private:
  struct Entry {
    nlohmann::json request;
    nlohmann::json reply;
  };
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

struct RemoteJudgeConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
  int max_in_flight = 4;
  std::string consistency_template = "consistency-v1";
  std::string completeness_template = "completeness-v1";
  std::string answer_template = "answer-v1";
  std::string quality_template = "quality-v1";
  std::string category_template = "category-v1";
};

class RemoteJudger : public Judger {
 public:
  RemoteJudger(RemoteJudgeConfig config, std::shared_ptr<JudgeTransport> transport,
               std::shared_ptr<JudgeCache> cache = std::make_shared<JudgeCache>());

  JudgeScore judge_consistency(const std::string& content_ref, const TimeSpan& span,
                               const std::string& caption, const RuleSet& rules) override;
  JudgeScore judge_completeness(const CompositeContentRef& composite, const std::string& question,
                                const std::string& final_answer, const RuleSet& rules) override;

  // Score from {"score": number, "rationale"?: string}, clamped into [0, 1].
  JudgeScore remote_judge(const JudgeRequest& request);

  // Raw reply, cached and retried. Identical concurrent requests share one call.
  nlohmann::json call(const JudgeRequest& request);

  std::uint64_t wire_calls() const;
  const RemoteJudgeConfig& config() const { return config_; }
  const std::shared_ptr<JudgeCache>& cache() const { return cache_; }

 protected:
  JudgeScore judge_free_text(const std::string& question, const std::string& prediction,
                             const std::string& reference) override;

 private:
  nlohmann::json call_with_retries(const nlohmann::json& body);

  RemoteJudgeConfig config_;
  std::shared_ptr<JudgeTransport> transport_;
  std::shared_ptr<JudgeCache> cache_;
  std::counting_semaphore<> in_flight_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<nlohmann::json>> pending_;
  std::uint64_t wire_calls_ = 0;
};

JudgeScore parse_score_reply(const nlohmann::json& reply);

}  // namespace avrl
