#include "damqa/datasets.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "damqa/error.hpp"
#include "damqa/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace damqa {

GroundTruth SampleRecord::ground_truth() const {
  GroundTruth gt;
  gt.answers = answers;
  if (question_type) gt.question_type = parse_question_type(*question_type);
  if (answer_kind) gt.answer_kind = parse_answer_kind(*answer_kind);
  return gt;
}

ordered_json SampleRecord::to_json() const {
  ordered_json j;
  j["id"] = id;
  j["image"] = image;
  j["question"] = question;
  j["answers"] = answers;
  j["question_type"] = question_type ? ordered_json(*question_type) : ordered_json(nullptr);
  j["answer_kind"] = answer_kind ? ordered_json(*answer_kind) : ordered_json(nullptr);
  j["dataset"] = dataset;
  return j;
}

namespace {

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

std::string required_string(const json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw DataError(line_error(line, std::string("\"") + key + "\" must be a string"));
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw DataError(line_error(line, std::string("\"") + key + "\" must be a string or null"));
  }
  return it->get<std::string>();
}

SampleRecord parse_record(const json& j, std::size_t line) {
  if (!j.is_object()) {
    throw DataError(line_error(line, "record is not a JSON object"));
  }
  SampleRecord r;
  r.id = required_string(j, "id", line);
  r.image = required_string(j, "image", line);
  r.question = required_string(j, "question", line);
  r.dataset = required_string(j, "dataset", line);
  r.question_type = optional_string(j, "question_type", line);
  r.answer_kind = optional_string(j, "answer_kind", line);
  if (r.id.empty()) throw DataError(line_error(line, "\"id\" is empty"));
  if (r.image.empty()) throw DataError(line_error(line, "\"image\" is empty"));
  if (r.question.empty()) throw DataError(line_error(line, "\"question\" is empty"));

  const auto answers = j.find("answers");
  if (answers == j.end() || !answers->is_array()) {
    throw DataError(line_error(line, "\"answers\" must be a list of strings"));
  }
  for (const auto& a : *answers) {
    if (!a.is_string()) throw DataError(line_error(line, "\"answers\" must be a list of strings"));
    r.answers.push_back(a.get<std::string>());
  }
  if (r.answers.empty()) {
    throw DataError(line_error(line, "record " + r.id + " has an empty answers list"));
  }
  return r;
}

}  // namespace

std::vector<SampleRecord> load_canonical(const fs::path& path, const fs::path& images_root,
                                         const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open dataset: " + path.string());
  }
  std::vector<SampleRecord> records;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string buffer;
  std::size_t line = 0;
  while (std::getline(in, buffer)) {
    ++line;
    if (text::trim(buffer).empty()) continue;
    const auto j = json::parse(buffer, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
      throw DataError(path.string() + ": " + line_error(line, "malformed JSON"));
    }
    auto record = parse_record(j, line);
    if (const auto [it, inserted] = first_seen.emplace(record.id, line); !inserted) {
      throw DataError(path.string() + ": " +
                      line_error(line, "duplicate id \"" + record.id + "\" (first on line " +
                                           std::to_string(it->second) + ")"));
    }
    records.push_back(std::move(record));
  }

  if (options.check_images) {
    std::vector<std::string> missing;
    for (const auto& r : records) {
      if (!fs::exists(images_root / r.image)) missing.push_back(r.id);
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " record(s) reference missing images:";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
      if (missing.size() > 20) msg += " ...";
      throw DataError(msg);
    }
  }
  return records;
}

void write_canonical(std::span<const SampleRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    out << r.to_json().dump() << '\n';
  }
}

void write_canonical(std::span<const SampleRecord> records, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write dataset: " + path.string());
  }
  write_canonical(records, out);
}

std::optional<SourceFormat> parse_source_format(std::string_view name) {
  const auto n = text::lower(name);
  if (n == "docvqa") return SourceFormat::DocVQA;
  if (n == "textvqa") return SourceFormat::TextVQA;
  if (n == "chartqa") return SourceFormat::ChartQA;
  if (n == "chartqapro") return SourceFormat::ChartQAPro;
  if (n == "infographicvqa") return SourceFormat::InfographicVQA;
  if (n == "vqav2") return SourceFormat::VQAv2;
  return std::nullopt;
}

std::string_view source_format_name(SourceFormat f) {
  switch (f) {
    case SourceFormat::DocVQA: return "docvqa";
    case SourceFormat::TextVQA: return "textvqa";
    case SourceFormat::ChartQA: return "chartqa";
    case SourceFormat::ChartQAPro: return "chartqapro";
    case SourceFormat::InfographicVQA: return "infographicvqa";
    case SourceFormat::VQAv2: return "vqav2";
  }
  return "unknown";
}

// Converters ----------------------------------------------------------------

namespace {

// Whole-file JSON, falling back to JSON lines. Returns a null json for an
// empty file.
json read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open annotations: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  const auto content = ss.str();
  if (text::trim(content).empty()) return nullptr;

  auto doc = json::parse(content, nullptr, /*allow_exceptions=*/false);
  if (!doc.is_discarded()) return doc;

  json lines = json::array();
  std::istringstream ls(content);
  std::string buffer;
  std::size_t line = 0;
  while (std::getline(ls, buffer)) {
    ++line;
    if (text::trim(buffer).empty()) continue;
    auto j = json::parse(buffer, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
      throw DataError(path.string() + ": neither a JSON document nor JSON lines (line " +
                      std::to_string(line) + ")");
    }
    lines.push_back(std::move(j));
  }
  return lines;
}

// Item list from either a bare array or an object wrapping one under `key`.
const json* item_array(const json& doc, const char* key) {
  if (doc.is_array()) return &doc;
  if (doc.is_object()) {
    if (const auto it = doc.find(key); it != doc.end() && it->is_array()) return &*it;
  }
  return nullptr;
}

// Strings stay as-is; numbers and booleans are rendered as JSON text.
std::optional<std::string> scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  return std::nullopt;
}

struct Emitter {
  ConvertResult& result;
  std::unordered_set<std::string> ids;

  void skip(std::size_t index, const std::string& why) {
    ++result.skipped;
    result.warnings.push_back("record " + std::to_string(index) + " skipped: " + why);
  }

  void emit(SampleRecord r, std::size_t index) {
    if (r.question.empty()) return skip(index, "empty question");
    if (r.answers.empty()) return skip(index, "no answers");
    if (r.image.empty()) return skip(index, "no image");
    if (!ids.insert(r.id).second) return skip(index, "duplicate id " + r.id);
    result.records.push_back(std::move(r));
  }
};

std::vector<std::string> string_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& a : v) {
      if (auto s = scalar_text(a)) out.push_back(std::move(*s));
    }
  } else if (auto s = scalar_text(v)) {
    out.push_back(std::move(*s));
  }
  return out;
}

void convert_doc_style(const json& doc, SourceFormat format, const std::string& prefix,
                       Emitter& out) {
  const auto* items = item_array(doc, "data");
  if (!items) throw DataError("expected a \"data\" array of questions");
  const auto dataset = std::string(source_format_name(format));
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& it = (*items)[i];
    if (!it.is_object()) { out.skip(i, "not an object"); continue; }
    const auto qid = it.contains("questionId") ? scalar_text(it["questionId"]) : std::nullopt;
    const char* image_key = format == SourceFormat::InfographicVQA && it.contains("image_local_name")
                                ? "image_local_name"
                                : "image";
    if (!qid || !it.contains("question") || !it["question"].is_string() ||
        !it.contains(image_key) || !it[image_key].is_string() || !it.contains("answers")) {
      out.skip(i, "missing questionId/question/" + std::string(image_key) + "/answers");
      continue;
    }
    SampleRecord r;
    r.id = *qid;
    r.question = it["question"].get<std::string>();
    r.image = prefix + it[image_key].get<std::string>();
    r.answers = string_list(it["answers"]);
    r.dataset = dataset;
    out.emit(std::move(r), i);
  }
}

void convert_textvqa(const json& doc, const std::string& prefix, Emitter& out) {
  const auto* items = item_array(doc, "data");
  if (!items) throw DataError("expected a \"data\" array of questions");
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& it = (*items)[i];
    if (!it.is_object()) { out.skip(i, "not an object"); continue; }
    const auto qid = it.contains("question_id") ? scalar_text(it["question_id"]) : std::nullopt;
    const auto image = it.contains("image_id") ? scalar_text(it["image_id"]) : std::nullopt;
    if (!qid || !image || !it.contains("question") || !it["question"].is_string() ||
        !it.contains("answers")) {
      out.skip(i, "missing question_id/image_id/question/answers");
      continue;
    }
    SampleRecord r;
    r.id = *qid;
    r.question = it["question"].get<std::string>();
    r.image = prefix + *image + ".jpg";
    r.answers = string_list(it["answers"]);
    r.dataset = "textvqa";
    out.emit(std::move(r), i);
  }
}

void convert_chartqa(const json& doc, const std::string& prefix, Emitter& out) {
  const auto* items = item_array(doc, "data");
  if (!items) throw DataError("expected an array of {imgname, query, label}");
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& it = (*items)[i];
    if (!it.is_object() || !it.contains("imgname") || !it["imgname"].is_string() ||
        !it.contains("query") || !it["query"].is_string() || !it.contains("label")) {
      out.skip(i, "missing imgname/query/label");
      continue;
    }
    SampleRecord r;
    r.id = "chartqa-" + std::to_string(i);
    r.question = it["query"].get<std::string>();
    r.image = prefix + it["imgname"].get<std::string>();
    r.answers = string_list(it["label"]);
    r.dataset = "chartqa";
    out.emit(std::move(r), i);
  }
}

bool truthy_flag(const json& v) {
  if (v.is_array()) return !v.empty() && truthy_flag(v.front());
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = text::lower(text::trim(v.get<std::string>()));
    return s == "yes" || s == "true" || s == "1";
  }
  return false;
}

// Value of the first key present, trying each spelling in turn.
const json* field(const json& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (const auto it = obj.find(k); it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

void convert_chartqapro(const json& doc, const std::string& prefix, ConvertResult& result,
                        Emitter& out) {
  const auto* items = item_array(doc, "data");
  if (!items) throw DataError("expected an array of ChartQAPro records");
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& it = (*items)[i];
    if (!it.is_object()) { out.skip(i, "not an object"); continue; }
    const auto* question = field(it, {"Question", "question"});
    const auto* answer = field(it, {"Answer", "answer", "answers"});
    const auto* qtype = field(it, {"Question Type", "question_type"});
    const auto* image = field(it, {"image", "image_path", "imgname"});
    if (!question || !answer || !image || !image->is_string()) {
      out.skip(i, "missing Question/Answer/image path");
      continue;
    }
    const auto qtype_text = qtype ? scalar_text(*qtype) : std::nullopt;
    const auto questions = string_list(*question);
    const bool conversational =
        (qtype_text && text::lower(text::trim(*qtype_text)) == "conversational") ||
        questions.size() > 1;
    if (conversational) {
      ++result.dropped_conversational;
      continue;
    }
    if (questions.empty()) { out.skip(i, "empty Question"); continue; }

    SampleRecord r;
    const auto* id = field(it, {"id", "question_id", "questionId"});
    r.id = id && scalar_text(*id) ? *scalar_text(*id) : "chartqapro-" + std::to_string(i);
    r.question = questions.front();
    r.image = prefix + image->get<std::string>();
    r.question_type = qtype_text;
    r.dataset = "chartqapro";

    auto answers = string_list(*answer);
    if (answers.size() == 1) {
      const auto a = text::trim(answers.front());
      if (a.size() >= 2 && a.front() == '[' && a.back() == ']') {
        auto items_in = split_list_answer(a);
        if (items_in.size() > 1) {
          answers = std::move(items_in);
          r.answer_kind = "list";
        }
      }
    }
    if (!r.answer_kind) {
      if (const auto* year = field(it, {"Year", "year"}); year && truthy_flag(*year)) {
        r.answer_kind = "year";
      }
    }
    r.answers = std::move(answers);
    out.emit(std::move(r), i);
  }
}

std::unordered_set<std::string> read_subset_ids(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open subset id file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::unordered_set<std::string> ids;
  const auto doc = json::parse(ss.str(), nullptr, /*allow_exceptions=*/false);
  if (!doc.is_discarded() && doc.is_array()) {
    for (const auto& v : doc) {
      if (auto s = scalar_text(v)) ids.insert(*s);
    }
    return ids;
  }
  std::istringstream lines(ss.str());
  std::string buffer;
  while (std::getline(lines, buffer)) {
    const auto id = text::trim(buffer);
    if (!id.empty()) ids.emplace(id);
  }
  return ids;
}

void convert_vqav2(const json& doc, const ConvertOptions& options, const std::string& prefix,
                   ConvertResult& result, Emitter& out) {
  json questions_doc;
  if (doc.is_object() && doc.contains("questions")) {
    questions_doc = doc;
  } else if (options.questions) {
    questions_doc = read_annotations(*options.questions);
  } else {
    throw DataError("VQAv2 needs the questions file (--questions) or a combined document");
  }
  const auto* questions = item_array(questions_doc, "questions");
  const auto* annotations = item_array(doc, "annotations");
  if (!questions || !annotations) {
    throw DataError("VQAv2 input must provide \"questions\" and \"annotations\" arrays");
  }

  std::unordered_map<std::string, const json*> question_by_id;
  for (const auto& q : *questions) {
    if (!q.is_object() || !q.contains("question_id")) continue;
    if (auto id = scalar_text(q["question_id"])) question_by_id[*id] = &q;
  }

  std::optional<std::unordered_set<std::string>> subset;
  if (options.subset_ids) subset = read_subset_ids(*options.subset_ids);

  for (std::size_t i = 0; i < annotations->size(); ++i) {
    const auto& a = (*annotations)[i];
    const auto qid = a.is_object() && a.contains("question_id") ? scalar_text(a["question_id"])
                                                                : std::nullopt;
    if (!qid) { out.skip(i, "annotation without question_id"); continue; }
    if (subset && !subset->contains(*qid)) {
      ++result.dropped_by_subset;
      continue;
    }
    const auto q = question_by_id.find(*qid);
    if (q == question_by_id.end() || !q->second->contains("question") ||
        !(*q->second)["question"].is_string()) {
      out.skip(i, "no question text for id " + *qid);
      continue;
    }
    if (!a.contains("image_id") || !a["image_id"].is_number_integer() || !a.contains("answers") ||
        !a["answers"].is_array()) {
      out.skip(i, "annotation " + *qid + " lacks image_id/answers");
      continue;
    }
    SampleRecord r;
    r.id = *qid;
    r.question = (*q->second)["question"].get<std::string>();
    char name[64];
    std::snprintf(name, sizeof name, "COCO_val2014_%012lld.jpg", a["image_id"].get<long long>());
    r.image = prefix + name;
    for (const auto& ans : a["answers"]) {
      if (ans.is_object() && ans.contains("answer") && ans["answer"].is_string()) {
        r.answers.push_back(ans["answer"].get<std::string>());
      } else if (ans.is_string()) {
        r.answers.push_back(ans.get<std::string>());
      }
    }
    if (const auto* t = field(a, {"answer_type"}); t && t->is_string()) {
      r.question_type = t->get<std::string>();
    }
    r.dataset = "vqav2";
    out.emit(std::move(r), i);
  }
}

std::string default_prefix(SourceFormat f) {
  switch (f) {
    case SourceFormat::DocVQA: return "";
    case SourceFormat::InfographicVQA: return "infographicsvqa_images/";
    case SourceFormat::TextVQA: return "train_images/";
    case SourceFormat::ChartQA: return "png/";
    case SourceFormat::ChartQAPro: return "";
    case SourceFormat::VQAv2: return "val2014/";
  }
  return "";
}

}  // namespace

ConvertResult convert(SourceFormat format, const fs::path& in, const ConvertOptions& options) {
  ConvertResult result;
  const auto doc = read_annotations(in);
  if (doc.is_null()) {
    result.warnings.push_back(in.string() + " is empty; no records produced");
    spdlog::warn("{}", result.warnings.back());
    return result;
  }
  const auto prefix = options.image_prefix.value_or(default_prefix(format));
  Emitter out{result, {}};
  switch (format) {
    case SourceFormat::DocVQA:
    case SourceFormat::InfographicVQA:
      convert_doc_style(doc, format, prefix, out);
      break;
    case SourceFormat::TextVQA:
      convert_textvqa(doc, prefix, out);
      break;
    case SourceFormat::ChartQA:
      convert_chartqa(doc, prefix, out);
      break;
    case SourceFormat::ChartQAPro:
      convert_chartqapro(doc, prefix, result, out);
      break;
    case SourceFormat::VQAv2:
      convert_vqav2(doc, options, prefix, result, out);
      break;
  }
  for (const auto& w : result.warnings) spdlog::warn("{}", w);
  return result;
}

}  // namespace damqa
