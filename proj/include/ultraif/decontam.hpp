#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "ultraif/jsonl.hpp"

namespace ultraif {

// Locale-free tokenization: split on ASCII whitespace, casefold, strip
// leading/trailing punctuation per token. Same bytes in, same tokens out, on
// every platform.
std::vector<std::string> tokenize(std::string_view text);

// Which fields of a JSONL document feed the scanner.
enum class FieldMode { Prompt, Response, Both };

FieldMode field_mode_from_string(std::string_view name);
std::string_view to_string(FieldMode mode);

// Pulls the scannable texts out of the document shapes this pipeline emits
// (sft/pref records) plus common foreign corpora ({"text"}, {"instruction",
// "response"}, plain chat messages).
std::vector<std::string> extract_texts(const json& doc, FieldMode mode);

class NgramIndex {
public:
    explicit NgramIndex(int n);

    int n() const { return n_; }
    std::int64_t source_count() const { return source_count_; }
    std::int64_t malformed_lines() const { return malformed_lines_; }
    std::size_t gram_count() const { return grams_.size(); }

    // Set semantics: a gram seen in any training document is stored once.
    void add_document(std::string_view text);
    void note_malformed() { ++malformed_lines_; }

    bool contains_tokens(const std::vector<std::string>& tokens, std::size_t start) const;

    // Joins n tokens into the internal key; exposed for the matcher.
    static std::string gram_key(const std::vector<std::string>& tokens, std::size_t start, int n);

private:
    int n_;
    std::unordered_set<std::string> grams_;
    std::int64_t source_count_ = 0;
    std::int64_t malformed_lines_ = 0;
};

// Feeds one JSONL file into an existing index; malformed lines are counted,
// not fatal. Returns the number of malformed lines in this file.
std::int64_t ingest_jsonl(NgramIndex& index, const std::filesystem::path& train_path,
                          FieldMode mode);

NgramIndex build_index(const std::filesystem::path& train_path, int n, FieldMode mode);

struct BenchmarkStats {
    std::int64_t test_ngrams_total = 0;  // with multiplicity
    std::int64_t matched = 0;
    double ratio = 0.0;
};

struct FlaggedExample {
    std::string benchmark;
    std::string doc_id;  // "id" field when present, else line number
    std::string ngram;   // space-joined tokens
};

struct ContaminationReport {
    int n = 13;
    std::int64_t train_documents = 0;
    std::map<std::string, BenchmarkStats> per_benchmark;
    std::vector<FlaggedExample> flagged;
};

// Test-side n-grams counted with multiplicity against the train-side set.
BenchmarkStats overlap_ratio(const NgramIndex& index, const std::filesystem::path& test_path,
                             FieldMode mode, const std::string& benchmark_name,
                             std::vector<FlaggedExample>* flagged, std::size_t flag_cap);

ContaminationReport scan(const std::filesystem::path& train_path,
                         const std::vector<std::pair<std::string, std::filesystem::path>>& benchmarks,
                         int n, FieldMode mode, std::size_t flag_cap);

// Same scan over the union of several training files (one shared gram set).
ContaminationReport scan_many(const std::vector<std::filesystem::path>& train_paths,
                              const std::vector<std::pair<std::string, std::filesystem::path>>& benchmarks,
                              int n, FieldMode mode, std::size_t flag_cap);

json report_to_json(const ContaminationReport& report);
std::string format_report_table(const ContaminationReport& report);

}  // namespace ultraif
