#include "ultraif/decontam.hpp"

#include <cstdio>

#include "ultraif/errors.hpp"

namespace ultraif {

namespace {

bool ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool ascii_punct(unsigned char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

char ascii_lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : static_cast<char>(c);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i == start) break;
        std::size_t lo = start;
        std::size_t hi = i;
        while (lo < hi && ascii_punct(static_cast<unsigned char>(text[lo]))) ++lo;
        while (hi > lo && ascii_punct(static_cast<unsigned char>(text[hi - 1]))) --hi;
        if (lo == hi) continue;  // token was all punctuation
        std::string token;
        token.reserve(hi - lo);
        for (std::size_t k = lo; k < hi; ++k) {
            token.push_back(ascii_lower(static_cast<unsigned char>(text[k])));
        }
        tokens.push_back(std::move(token));
    }
    return tokens;
}

FieldMode field_mode_from_string(std::string_view name) {
    if (name == "prompt") return FieldMode::Prompt;
    if (name == "response") return FieldMode::Response;
    if (name == "both") return FieldMode::Both;
    throw ConfigError("unknown field mode: " + std::string(name));
}

std::string_view to_string(FieldMode mode) {
    switch (mode) {
        case FieldMode::Prompt: return "prompt";
        case FieldMode::Response: return "response";
        case FieldMode::Both: return "both";
    }
    throw Error("unreachable field mode");
}

std::vector<std::string> extract_texts(const json& doc, FieldMode mode) {
    std::vector<std::string> texts;
    bool want_prompt = mode != FieldMode::Response;
    bool want_response = mode != FieldMode::Prompt;

    auto add = [&texts](const json& v) {
        if (v.is_string()) texts.push_back(v.get<std::string>());
    };
    auto add_messages = [&](const json& messages) {
        if (!messages.is_array()) return;
        for (const auto& m : messages) {
            if (!m.is_object()) continue;
            std::string role = m.value("role", std::string{});
            bool is_response = role == "assistant";
            if ((is_response && want_response) || (!is_response && want_prompt)) {
                if (m.contains("content")) add(m["content"]);
                if (m.contains("text")) add(m["text"]);
            }
        }
    };

    if (!doc.is_object()) {
        if (doc.is_string()) add(doc);
        return texts;
    }

    if (doc.contains("prompt_messages")) {
        // Preference record shape.
        if (want_prompt) add_messages(doc["prompt_messages"]);
        if (want_response) {
            if (doc.contains("chosen")) add(doc["chosen"]);
            if (doc.contains("rejected")) add(doc["rejected"]);
        }
        return texts;
    }
    if (doc.contains("messages")) {
        add_messages(doc["messages"]);
        return texts;
    }

    if (want_prompt) {
        if (doc.contains("text")) add(doc["text"]);
        if (doc.contains("instruction")) add(doc["instruction"]);
        if (doc.contains("prompt")) add(doc["prompt"]);
        if (doc.contains("question")) add(doc["question"]);
    }
    if (want_response) {
        if (doc.contains("response")) add(doc["response"]);
        if (doc.contains("answer")) add(doc["answer"]);
        if (doc.contains("output")) add(doc["output"]);
    }
    return texts;
}

NgramIndex::NgramIndex(int n) : n_(n) {
    if (n < 1) {
        throw ConfigError("n-gram size must be >= 1");
    }
}

std::string NgramIndex::gram_key(const std::vector<std::string>& tokens, std::size_t start, int n) {
    std::string key;
    for (int k = 0; k < n; ++k) {
        if (k) key.push_back('\x1f');  // unit separator never survives tokenization
        key += tokens[start + static_cast<std::size_t>(k)];
    }
    return key;
}

void NgramIndex::add_document(std::string_view text) {
    ++source_count_;
    std::vector<std::string> tokens = tokenize(text);
    if (tokens.size() < static_cast<std::size_t>(n_)) return;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n_) <= tokens.size(); ++i) {
        grams_.insert(gram_key(tokens, i, n_));
    }
}

bool NgramIndex::contains_tokens(const std::vector<std::string>& tokens, std::size_t start) const {
    return grams_.contains(gram_key(tokens, start, n_));
}

std::int64_t ingest_jsonl(NgramIndex& index, const std::filesystem::path& train_path,
                          FieldMode mode) {
    std::int64_t malformed = for_each_jsonl(train_path, [&](json&& doc, std::size_t) {
        for (const auto& text : extract_texts(doc, mode)) {
            index.add_document(text);
        }
    });
    for (std::int64_t i = 0; i < malformed; ++i) index.note_malformed();
    return malformed;
}

NgramIndex build_index(const std::filesystem::path& train_path, int n, FieldMode mode) {
    NgramIndex index(n);
    ingest_jsonl(index, train_path, mode);
    return index;
}

BenchmarkStats overlap_ratio(const NgramIndex& index, const std::filesystem::path& test_path,
                             FieldMode mode, const std::string& benchmark_name,
                             std::vector<FlaggedExample>* flagged, std::size_t flag_cap) {
    BenchmarkStats stats;
    auto n = static_cast<std::size_t>(index.n());
    for_each_jsonl(test_path, [&](json&& doc, std::size_t lineno) {
        std::string doc_id = doc.is_object() && doc.contains("id") && doc["id"].is_string()
                                 ? doc["id"].get<std::string>()
                                 : "line " + std::to_string(lineno);
        for (const auto& text : extract_texts(doc, mode)) {
            std::vector<std::string> tokens = tokenize(text);
            if (tokens.size() < n) continue;
            for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
                ++stats.test_ngrams_total;
                if (!index.contains_tokens(tokens, i)) continue;
                ++stats.matched;
                if (flagged && flagged->size() < flag_cap) {
                    std::string pretty;
                    for (std::size_t k = 0; k < n; ++k) {
                        if (k) pretty.push_back(' ');
                        pretty += tokens[i + k];
                    }
                    flagged->push_back({benchmark_name, doc_id, std::move(pretty)});
                }
            }
        }
    });
    stats.ratio = stats.test_ngrams_total == 0
                      ? 0.0
                      : static_cast<double>(stats.matched) / static_cast<double>(stats.test_ngrams_total);
    return stats;
}

ContaminationReport scan(const std::filesystem::path& train_path,
                         const std::vector<std::pair<std::string, std::filesystem::path>>& benchmarks,
                         int n, FieldMode mode, std::size_t flag_cap) {
    return scan_many({train_path}, benchmarks, n, mode, flag_cap);
}

ContaminationReport scan_many(const std::vector<std::filesystem::path>& train_paths,
                              const std::vector<std::pair<std::string, std::filesystem::path>>& benchmarks,
                              int n, FieldMode mode, std::size_t flag_cap) {
    NgramIndex index(n);
    for (const auto& path : train_paths) ingest_jsonl(index, path, mode);
    ContaminationReport report;
    report.n = n;
    report.train_documents = index.source_count();
    for (const auto& [name, path] : benchmarks) {
        report.per_benchmark[name] =
            overlap_ratio(index, path, mode, name, &report.flagged, flag_cap);
    }
    return report;
}

json report_to_json(const ContaminationReport& report) {
    json benchmarks = json::object();
    for (const auto& [name, stats] : report.per_benchmark) {
        benchmarks[name] = json{{"test_ngrams_total", stats.test_ngrams_total},
                                {"matched", stats.matched},
                                {"ratio", stats.ratio}};
    }
    json flagged = json::array();
    for (const auto& f : report.flagged) {
        flagged.push_back(json{{"benchmark", f.benchmark}, {"doc_id", f.doc_id}, {"ngram", f.ngram}});
    }
    return json{{"n", report.n},
                {"train_documents", report.train_documents},
                {"per_benchmark", std::move(benchmarks)},
                {"flagged_examples", std::move(flagged)}};
}

std::string format_report_table(const ContaminationReport& report) {
    std::string out = "benchmark                 ngrams     matched    ratio\n";
    char line[160];
    for (const auto& [name, stats] : report.per_benchmark) {
        std::snprintf(line, sizeof(line), "%-24s %9lld %10lld   %.4f\n", name.c_str(),
                      static_cast<long long>(stats.test_ngrams_total),
                      static_cast<long long>(stats.matched), stats.ratio);
        out += line;
    }
    return out;
}

}  // namespace ultraif
