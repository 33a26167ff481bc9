#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ultraif {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// SHA-256 of a file's contents, streamed. Throws IoError if unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

// First 8 bytes of sha256(bytes), big-endian. The stable 64-bit hash behind
// all seed derivation; never use std::hash here, it varies across libstdc++
// versions and would break replay transcripts.
std::uint64_t stable_hash64(std::string_view bytes);

// Seed tree: run seed -> stage seed -> record seed -> call seed. Each level
// mixes the parent with a label so reordering records or stages never
// changes anyone else's seed.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

// Leaf of the seed tree, shaped for ChatRequest::seed_hint. `purpose`
// distinguishes call sites within one record (e.g. "decompose", "question"),
// `index` the item within the record, `attempt` the re-sample ordinal.
// Result is masked to 63 bits so it stays non-negative in providers that
// take a signed seed.
std::int64_t call_seed(std::uint64_t record_seed, std::string_view purpose, int index, int attempt);

}  // namespace ultraif
