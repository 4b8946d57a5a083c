#include "avrl/judge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "avrl/answer.hpp"
#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

JudgeScore JudgeScore::clamped(double value, std::optional<std::string> rationale) {
  if (std::isnan(value)) value = 0.0;
  return JudgeScore{std::clamp(value, 0.0, 1.0), std::move(rationale)};
}

RuleSet::RuleSet(std::vector<Rule> rules) : rules_(std::move(rules)) {
  double total = 0.0;
  for (const auto& r : rules_) {
    if (!(r.weight >= 0.0)) throw std::invalid_argument("rule '" + r.id + "' has a negative weight");
    total += r.weight;
  }
  if (!rules_.empty() && std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("rule weights must sum to 1");
  }
}

double RuleSet::weight(std::string_view id) const {
  for (const auto& r : rules_) {
    if (r.id == id) return r.weight;
  }
  return 0.0;
}

std::vector<std::string> RuleSet::prompts() const {
  std::vector<std::string> out;
  for (const auto& r : rules_) out.push_back(r.prompt);
  return out;
}

RuleSet default_consistency_rules() {
  const double w = 1.0 / 3.0;
  return RuleSet({
      {"grounded", w, "Every event named in the caption is visible or audible inside the clip."},
      {"faithful", w, "The caption names nothing that is absent from the clip."},
      {"specific", w, "The caption describes this clip rather than the video in general."},
  });
}

RuleSet default_completeness_rules() {
  const double w = 1.0 / 3.0;
  return RuleSet({
      {"sufficiency", w, "The clip contains all audio-visual evidence needed for the question."},
      {"precision", w, "The clip contains little material unrelated to the question."},
      {"answerability", w, "The clip alone supports reasoning from the question to the answer."},
  });
}

JudgeScore Judger::judge_answer(const std::string& question, const std::string& prediction,
                                const std::string& reference,
                                const std::vector<std::string>& options) {
  if (!options.empty()) return JudgeScore{multiple_choice_score(prediction, reference, options), {}};
  return judge_free_text(question, prediction, reference);
}

std::vector<std::string> caption_symbols(const std::string& caption) {
  std::vector<std::string> out;
  for (auto& tok : word_tokens(caption)) {
    if (is_vocabulary_symbol(tok) && std::find(out.begin(), out.end(), tok) == out.end()) {
      out.push_back(std::move(tok));
    }
  }
  return out;
}

OracleJudger::OracleJudger(std::shared_ptr<const ContentStore> store) : store_(std::move(store)) {
  if (!store_) throw std::invalid_argument("oracle judger needs a content store");
}

JudgeScore OracleJudger::judge_consistency(const std::string& content_ref, const TimeSpan& span,
                                           const std::string& caption, const RuleSet& /*rules*/) {
  const SymbolicAVContent content = store_->content(content_ref);
  const auto mentioned = caption_symbols(caption);
  if (mentioned.empty()) return JudgeScore{0.0, "caption names no known event"};
  std::set<std::string> present;
  for (const Event* e : content.all_events()) {
    if (e->span.overlaps(span)) present.insert(e->symbol);
  }
  std::size_t hits = 0;
  for (const auto& s : mentioned) hits += present.count(s);
  const double coverage = static_cast<double>(hits) / static_cast<double>(mentioned.size());
  const double exactness = hits == mentioned.size() ? 1.0 : 0.5;
  return JudgeScore::clamped(coverage * exactness);
}

CompletenessParts OracleJudger::completeness_parts(const CompositeContentRef& composite) const {
  const GeneratedTask& task = store_->task(composite.content_ref);
  const SymbolicAVContent content = store_->content(composite.content_ref);
  const SegmentSet spans = composite.source_spans();
  const SegmentSet covered = merge_overlaps(spans);

  CompletenessParts parts;
  if (!task.evidence.empty()) {
    std::size_t contained = 0;
    for (const auto& e : task.evidence) {
      contained += std::any_of(covered.begin(), covered.end(),
                               [&](const TimeSpan& s) { return s.contains(e.span); });
    }
    parts.sufficiency = static_cast<double>(contained) / static_cast<double>(task.evidence.size());
  }
  if (composite.duration > 0.0) {
    parts.precision = std::clamp(intersection_measure(spans, task.ground_truth) / composite.duration,
                                 0.0, 1.0);
  }
  parts.answerability = determines_answer(task, observe_within(content, spans)) ? 1.0 : 0.0;
  return parts;
}

JudgeScore OracleJudger::judge_completeness(const CompositeContentRef& composite,
                                            const std::string& /*question*/,
                                            const std::string& /*final_answer*/,
                                            const RuleSet& rules) {
  const CompletenessParts p = completeness_parts(composite);
  const RuleSet& r = rules.size() == 0 ? default_completeness_rules() : rules;
  const double value = r.weight("sufficiency") * p.sufficiency + r.weight("precision") * p.precision +
                       r.weight("answerability") * p.answerability;
  std::ostringstream why;
  why << "sufficiency=" << p.sufficiency << " precision=" << p.precision
      << " answerability=" << p.answerability;
  return JudgeScore::clamped(value, why.str());
}

JudgeScore OracleJudger::judge_free_text(const std::string& /*question*/,
                                         const std::string& prediction,
                                         const std::string& reference) {
  return JudgeScore::clamped(token_f1(prediction, reference));
}

// ---------------------------------------------------------------------------

json JudgeRequest::to_json() const {
  json spans_json = json::array();
  for (const auto& s : spans) spans_json.push_back({s.start, s.end});
  json j{{"kind", kind},   {"content_ref", content_ref}, {"spans", spans_json},
         {"rules", rules}, {"template_id", template_id}};
  if (caption) j["caption"] = *caption;
  if (question) j["question"] = *question;
  if (final_answer) j["final_answer"] = *final_answer;
  if (reference) j["reference"] = *reference;
  if (dimension) j["dimension"] = *dimension;
  if (options) j["options"] = *options;
  return j;
}

std::string JudgeRequest::digest() const { return sha256_hex(to_json().dump()); }

HttpJudgeTransport::HttpJudgeTransport(std::string endpoint, std::string token)
    : endpoint_(std::move(endpoint)), token_(std::move(token)) {
  if (endpoint_.empty()) throw std::invalid_argument("judge endpoint is empty");
}

json HttpJudgeTransport::post(const json& body, std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint_);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post("/v1/judge", headers, body.dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Connection ||
        res.error() == httplib::Error::ConnectionTimeout) {
      throw TransportTimeout("judge request failed: " + httplib::to_string(res.error()));
    }
    throw TransportError("judge request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) throw TransportError("judge replied HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("judge reply is not JSON: ") + e.what());
  }
}

std::optional<json> JudgeCache::lookup(const std::string& digest) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second.reply;
}

void JudgeCache::store(const std::string& digest, const json& request, const json& reply) {
  std::lock_guard lock(mutex_);
  entries_[digest] = Entry{request, reply};
}

std::size_t JudgeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void JudgeCache::load_transcript(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::lock_guard lock(mutex_);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      entries_[j.at("digest").get<std::string>()] = Entry{j.at("request"), j.at("reply")};
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void JudgeCache::save_transcript(const std::string& path) const {
  std::string out;
  std::lock_guard lock(mutex_);
  for (const auto& [digest, entry] : entries_) {
    out += json{{"digest", digest}, {"request", entry.request}, {"reply", entry.reply}}.dump();
    out += '\n';
  }
  write_file(path, out);
}

JudgeScore parse_score_reply(const json& reply) {
  if (!reply.is_object() || !reply.contains("score") || !reply["score"].is_number()) {
    throw ProtocolError("judge reply lacks a numeric 'score' field");
  }
  const double score = reply["score"].get<double>();
  if (!std::isfinite(score)) throw ProtocolError("judge score is not finite");
  std::optional<std::string> rationale;
  if (reply.contains("rationale")) {
    if (!reply["rationale"].is_string()) throw ProtocolError("'rationale' must be a string");
    rationale = reply["rationale"].get<std::string>();
  }
  return JudgeScore::clamped(score, std::move(rationale));
}

RemoteJudger::RemoteJudger(RemoteJudgeConfig config, std::shared_ptr<JudgeTransport> transport,
                           std::shared_ptr<JudgeCache> cache)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(std::move(cache)),
      in_flight_(std::max(1, config_.max_in_flight)) {
  if (config_.max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  if (!cache_) cache_ = std::make_shared<JudgeCache>();
}

json RemoteJudger::call_with_retries(const json& body) {
  if (!transport_) throw JudgeUnavailable("no judge transport configured and reply not cached");
  auto delay = config_.backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      {
        std::lock_guard lock(mutex_);
        ++wire_calls_;
      }
      return transport_->post(body, config_.timeout);
    } catch (const TransportTimeout& e) {
      last_error = e.what();
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < config_.max_attempts && delay.count() > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw JudgeUnavailable("judge unavailable after " + std::to_string(config_.max_attempts) +
                         " attempts: " + last_error);
}

json RemoteJudger::call(const JudgeRequest& request) {
  const json body = request.to_json();
  const std::string digest = sha256_hex(body.dump());
  if (auto hit = cache_->lookup(digest)) return *hit;

  std::promise<json> promise;
  std::shared_future<json> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = pending_.find(digest);
    if (it != pending_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      pending_.emplace(digest, future);
      owner = true;
    }
  }
  if (!owner) return future.get();

  try {
    json reply = call_with_retries(body);
    cache_->store(digest, body, reply);
    promise.set_value(reply);
  } catch (...) {
    promise.set_exception(std::current_exception());
  }
  {
    std::lock_guard lock(mutex_);
    pending_.erase(digest);
  }
  return future.get();
}

JudgeScore RemoteJudger::remote_judge(const JudgeRequest& request) {
  return parse_score_reply(call(request));
}

std::uint64_t RemoteJudger::wire_calls() const {
  std::lock_guard lock(mutex_);
  return wire_calls_;
}

JudgeScore RemoteJudger::judge_consistency(const std::string& content_ref, const TimeSpan& span,
                                           const std::string& caption, const RuleSet& rules) {
  JudgeRequest req;
  req.kind = "consistency";
  req.content_ref = content_ref;
  req.spans = {span};
  req.caption = caption;
  req.rules = rules.prompts();
  req.template_id = config_.consistency_template;
  return remote_judge(req);
}

JudgeScore RemoteJudger::judge_completeness(const CompositeContentRef& composite,
                                            const std::string& question,
                                            const std::string& final_answer,
                                            const RuleSet& rules) {
  JudgeRequest req;
  req.kind = "completeness";
  req.content_ref = composite.content_ref;
  for (const auto& p : composite.pieces) req.spans.push_back(p.source);
  req.question = question;
  req.final_answer = final_answer;
  req.rules = rules.prompts();
  req.template_id = config_.completeness_template;
  return remote_judge(req);
}

JudgeScore RemoteJudger::judge_free_text(const std::string& question, const std::string& prediction,
                                         const std::string& reference) {
  JudgeRequest req;
  req.kind = "answer";
  req.question = question;
  req.final_answer = prediction;
  req.reference = reference;
  req.template_id = config_.answer_template;
  return remote_judge(req);
}

}  // namespace avrl
