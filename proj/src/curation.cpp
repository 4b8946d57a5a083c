#include "avrl/curation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <set>

#include "avrl/answer.hpp"
#include "avrl/trace.hpp"
#include "avrl/util.hpp"

namespace avrl {

using nlohmann::json;

void to_json(json& j, const SampleRecord& r) {
  j = json{{"id", r.id},
           {"content_ref", r.content_ref},
           {"question", r.question},
           {"reference_answer", r.reference_answer},
           {"duration", r.duration},
           {"scored", r.scored},
           {"s_v", r.s_v},
           {"s_a", r.s_a},
           {"s_q", r.s_q},
           {"s_r", r.s_r},
           {"s_c", r.s_c},
           {"category", r.category}};
}

void from_json(const json& j, SampleRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.content_ref = j.at("content_ref").get<std::string>();
  r.question = j.at("question").get<std::string>();
  r.reference_answer = j.at("reference_answer").get<std::string>();
  r.duration = j.at("duration").get<double>();
  r.scored = j.value("scored", false);
  r.s_v = j.value("s_v", 0.0);
  r.s_a = j.value("s_a", 0.0);
  r.s_q = j.value("s_q", 0.0);
  r.s_r = j.value("s_r", 0.0);
  r.s_c = j.value("s_c", 0.0);
  r.category = j.value("category", std::string());
}

const std::vector<std::string>& default_taxonomy() {
  static const std::vector<std::string> kLabels = {
      "action-recognition",   "object-recognition",         "attribute-recognition",
      "counting",             "event-sequencing",           "temporal-localization",
      "sound-recognition",    "sound-source-localization",  "audio-visual-correspondence",
      "speech-understanding", "music-understanding",        "causal-reasoning",
      "scene-understanding",  "emotion-recognition",        "spatial-reasoning",
      "summarization"};
  return kLabels;
}

void CurationConfig::validate() const {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("curation weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("curation weights must sum to 1");
  if (!(cap_ratio >= 1.0)) throw ConfigError("cap_ratio must be at least 1");
  if (taxonomy.empty()) throw ConfigError("taxonomy is empty");
  std::set<std::string> seen;
  for (const auto& label : taxonomy) {
    if (label.empty() || label == kOtherCategory) throw ConfigError("invalid taxonomy label: '" + label + "'");
    if (!seen.insert(label).second) throw ConfigError("duplicate taxonomy label: " + label);
  }
  for (const auto& [tmpl, label] : template_labels) {
    if (!seen.count(label)) throw ConfigError("template label not in taxonomy: " + label);
  }
  for (double t : {required_s_r, min_s_q, min_s_c, must_keep_s_a, must_keep_s_v, stage2_min_s_v, stage2_min_s_a}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("curation thresholds must lie in [0, 1]");
  }
}

double CurationConfig::composite(double s_v, double s_a, double s_q, double s_r) const {
  return weights[0] * s_v + weights[1] * s_a + weights[2] * s_q + weights[3] * s_r;
}

// ---------------------------------------------------------------------------

OracleSampleScorer::OracleSampleScorer(std::shared_ptr<const ContentStore> store) : store_(std::move(store)) {
  if (!store_) throw std::invalid_argument("oracle scorer needs a content store");
}

QualityScores OracleSampleScorer::score(const SampleRecord& record) {
  const GeneratedTask& task = store_->task(record.content_ref);
  QualityScores s;
  s.s_v = task.requirement != ModalityRequirement::kAudio ? 1.0 : 0.0;
  s.s_a = task.requirement != ModalityRequirement::kVisual ? 1.0 : 0.0;
  s.s_q = 1.0;
  s.s_r = oracle_answer_check(task, record.reference_answer);
  return s;
}

std::string OracleSampleScorer::categorize(const SampleRecord& record, const CurationConfig& cfg) {
  const GeneratedTask& task = store_->task(record.content_ref);
  auto it = cfg.template_labels.find(std::string(to_string(task.kind)));
  return it == cfg.template_labels.end() ? kOtherCategory : it->second;
}

RemoteSampleScorer::RemoteSampleScorer(std::shared_ptr<RemoteJudger> judger, std::string quality_template,
                                       std::string category_template)
    : judger_(std::move(judger)),
      quality_template_(std::move(quality_template)),
      category_template_(std::move(category_template)) {
  if (!judger_) throw std::invalid_argument("remote scorer needs a judger");
}

QualityScores RemoteSampleScorer::score(const SampleRecord& record) {
  auto ask = [&](const char* dimension) {
    JudgeRequest req;
    req.kind = "quality";
    req.content_ref = record.content_ref;
    req.question = record.question;
    req.reference = record.reference_answer;
    req.template_id = quality_template_;
    req.dimension = dimension;
    return judger_->remote_judge(req).value;
  };
  QualityScores s;
  s.s_v = ask("video_dependency");
  s.s_a = ask("audio_dependency");
  s.s_q = ask("question_logic");
  s.s_r = ask("response_accuracy");
  return s;
}

std::string RemoteSampleScorer::categorize(const SampleRecord& record, const CurationConfig& cfg) {
  JudgeRequest req;
  req.kind = "category";
  req.content_ref = record.content_ref;
  req.question = record.question;
  req.template_id = category_template_;
  req.options = cfg.taxonomy;
  json reply;
  try {
    reply = judger_->call(req);
  } catch (const JudgeUnavailable& e) {
    spdlog::warn("{}: category judge unavailable ({}); labelled other", record.id, e.what());
    return kOtherCategory;
  }
  if (!reply.is_object() || !reply.contains("label") || !reply["label"].is_string()) {
    throw ProtocolError("category reply lacks a string label");
  }
  const auto label = reply["label"].get<std::string>();
  return std::find(cfg.taxonomy.begin(), cfg.taxonomy.end(), label) != cfg.taxonomy.end() ? label
                                                                                          : kOtherCategory;
}

SampleRecord score_sample(const SampleRecord& record, SampleScorer& scorer, const CurationConfig& cfg) {
  SampleRecord out = record;
  try {
    const QualityScores s = scorer.score(record);
    out.s_v = std::clamp(s.s_v, 0.0, 1.0);
    out.s_a = std::clamp(s.s_a, 0.0, 1.0);
    out.s_q = std::clamp(s.s_q, 0.0, 1.0);
    out.s_r = std::clamp(s.s_r, 0.0, 1.0);
    out.s_c = cfg.composite(out.s_v, out.s_a, out.s_q, out.s_r);
    out.scored = true;
  } catch (const JudgeUnavailable& e) {
    spdlog::warn("{}: quality judge unavailable ({}); record left unscored", record.id, e.what());
    out.scored = false;
    out.s_v = out.s_a = out.s_q = out.s_r = out.s_c = 0.0;
  }
  return out;
}

std::string categorize(const SampleRecord& record, SampleScorer& scorer, const CurationConfig& cfg) {
  return scorer.categorize(record, cfg);
}

// ---------------------------------------------------------------------------

std::string filter_violation(const SampleRecord& r, const CurationConfig& cfg) {
  if (!r.scored) return "unscored";
  if (!(r.s_r == cfg.required_s_r)) return "s_r != " + format_seconds(cfg.required_s_r);
  if (!(r.s_q >= cfg.min_s_q)) return "s_q < " + format_seconds(cfg.min_s_q);
  if (!(r.s_c >= cfg.min_s_c)) return "s_c < " + format_seconds(cfg.min_s_c);
  return {};
}

std::vector<SampleRecord> quality_filter(const std::vector<SampleRecord>& records, const CurationConfig& cfg,
                                         std::vector<AuditEntry>* audit) {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    const std::string why = filter_violation(r, cfg);
    if (why.empty()) {
      out.push_back(r);
    } else if (audit) {
      audit->push_back({r.id, "filter", why});
    }
  }
  return out;
}

bool must_keep(const SampleRecord& r, const CurationConfig& cfg) {
  return r.s_a >= cfg.must_keep_s_a && r.s_v >= cfg.must_keep_s_v;
}

std::map<std::string, std::size_t> category_histogram(const std::vector<SampleRecord>& records) {
  std::map<std::string, std::size_t> h;
  for (const auto& r : records) ++h[r.category];
  return h;
}

std::vector<SampleRecord> balance_categories(const std::vector<SampleRecord>& records,
                                             const CurationConfig& cfg, std::vector<AuditEntry>* audit) {
  const auto counts = category_histogram(records);
  std::set<std::string> pruned;
  for (const auto& [label, n] : counts) {
    if (n < cfg.min_category_count) pruned.insert(label);
  }
  std::vector<std::pair<std::size_t, std::string>> sizes;
  for (const auto& [label, n] : counts) {
    if (!pruned.count(label)) sizes.emplace_back(n, label);
  }
  if (sizes.size() < 2) {
    throw DegenerateTaxonomy("fewer than two categories have at least " +
                             std::to_string(cfg.min_category_count) + " records");
  }
  // Largest first; ties by label.
  std::sort(sizes.begin(), sizes.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const auto cap = static_cast<std::size_t>(std::floor(cfg.cap_ratio * static_cast<double>(sizes[1].first)));

  std::set<std::string> capped;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i].first > cap && (i == 0 || cfg.global_cap)) capped.insert(sizes[i].second);
  }

  // Ids kept in each capped category.
  std::set<std::string> kept_ids;
  for (const auto& label : capped) {
    std::vector<const SampleRecord*> keep;
    std::vector<const SampleRecord*> rest;
    for (const auto& r : records) {
      if (r.category != label) continue;
      (must_keep(r, cfg) ? keep : rest).push_back(&r);
    }
    std::sort(rest.begin(), rest.end(), [](const SampleRecord* a, const SampleRecord* b) {
      return a->s_c != b->s_c ? a->s_c > b->s_c : a->id < b->id;
    });
    const std::size_t fill = cap > keep.size() ? cap - keep.size() : 0;
    for (const auto* r : keep) kept_ids.insert(r->id);
    for (std::size_t i = 0; i < std::min(fill, rest.size()); ++i) kept_ids.insert(rest[i]->id);
  }

  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (pruned.count(r.category)) {
      if (audit) audit->push_back({r.id, "prune", "category " + r.category + " below minimum count"});
      continue;
    }
    if (capped.count(r.category) && !kept_ids.count(r.id)) {
      if (audit) audit->push_back({r.id, "balance", "category " + r.category + " over cap " + std::to_string(cap)});
      continue;
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SampleRecord> stage2_subset(const std::vector<SampleRecord>& records, const CurationConfig& cfg,
                                        std::vector<AuditEntry>* audit) {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (r.s_v >= cfg.stage2_min_s_v && r.s_a >= cfg.stage2_min_s_a) {
      out.push_back(r);
    } else if (audit) {
      audit->push_back({r.id, "stage2", r.s_v < cfg.stage2_min_s_v ? "s_v below threshold" : "s_a below threshold"});
    }
  }
  return out;
}

CurationResult run_curation(const std::vector<SampleRecord>& records, SampleScorer& scorer,
                            const CurationConfig& cfg, std::size_t workers) {
  cfg.validate();
  CurationResult result;
  result.scored.resize(records.size());
  auto work = [&](std::size_t i) {
    SampleRecord r = records[i].scored ? records[i] : score_sample(records[i], scorer, cfg);
    result.scored[i] = std::move(r);
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < records.size(); ++i) work(i);
  } else {
    std::vector<std::future<void>> pending;
    const std::size_t per = (records.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * per;
      const std::size_t hi = std::min(records.size(), lo + per);
      if (lo >= hi) break;
      pending.push_back(std::async(std::launch::async, [&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) work(i);
      }));
    }
    for (auto& f : pending) f.get();
  }

  for (const auto& r : result.scored) {
    if (!r.scored) result.audit.push_back({r.id, "score", "judge unavailable"});
  }
  std::vector<AuditEntry> filter_audit;
  auto filtered = quality_filter(result.scored, cfg, &filter_audit);
  for (auto& e : filter_audit) {
    if (e.rule != "unscored") result.audit.push_back(std::move(e));
  }
  for (auto& r : filtered) {
    if (r.category.empty()) r.category = categorize(r, scorer, cfg);
  }
  result.stage1 = balance_categories(filtered, cfg, &result.audit);
  result.stage2 = stage2_subset(result.stage1, cfg, &result.audit);
  return result;
}

// ---------------------------------------------------------------------------

void write_manifest(std::vector<SampleRecord> records, const std::string& path) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::string body;
  for (const auto& r : records) body += json(r).dump() + "\n";
  write_file(path, body);
}

std::vector<SampleRecord> read_manifest(const std::string& path, const CurationConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ManifestParseError("cannot open manifest " + path, 0);
  std::vector<SampleRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw ManifestParseError(path + ":" + std::to_string(lineno) + ": " + why, lineno);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SampleRecord r;
    try {
      r = json::parse(line).get<SampleRecord>();
    } catch (const json::exception& e) {
      fail(e.what());
    }
    if (r.id.empty()) fail("empty id");
    if (!ids.insert(r.id).second) fail("duplicate id " + r.id);
    if (!(r.duration >= 0.0)) fail("negative duration");
    for (double s : {r.s_v, r.s_a, r.s_q, r.s_r, r.s_c}) {
      if (!(s >= 0.0 && s <= 1.0)) fail("score outside [0, 1]");
    }
    if (r.scored && std::abs(r.s_c - cfg.composite(r.s_v, r.s_a, r.s_q, r.s_r)) > 1e-9) {
      fail("s_c does not match the weighted sum of its parts");
    }
    if (!r.category.empty() && r.category != kOtherCategory &&
        std::find(cfg.taxonomy.begin(), cfg.taxonomy.end(), r.category) == cfg.taxonomy.end()) {
      fail("category not in taxonomy: " + r.category);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SampleRecord> export_manifest(const std::vector<GeneratedTask>& corpus, double corrupt_fraction,
                                          std::uint64_t seed) {
  if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0)) {
    throw std::invalid_argument("corrupt_fraction must lie in [0, 1]");
  }
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& t = corpus[i];
    SampleRecord r;
    r.id = t.id;
    r.content_ref = t.id;
    r.question = t.question;
    for (std::size_t k = 0; k < t.options.size(); ++k) {
      r.question += std::string("\n") + option_letter(k) + ") " + t.options[k];
    }
    r.duration = t.content.duration;
    std::mt19937_64 rng(derive_seed(seed, i, 0x636f7272));
    char letter = t.answer_key;
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < corrupt_fraction) {
      const int shift = std::uniform_int_distribution<int>(1, 3)(rng);
      letter = static_cast<char>('A' + (t.answer_key - 'A' + shift) % 4);
    }
    r.reference_answer = std::string(1, letter);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace avrl
