#pragma once

#include <stdexcept>
#include <string>

namespace ultraif {

// Root of every error this library throws on purpose. Catching ultraif::Error
// at a stage boundary is how the pipeline distinguishes "this record failed"
// from a programming bug.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Network-level failure after the retry budget is spent.
class TransportError : public Error {
public:
    using Error::Error;
};

// The provider answered, but the payload does not follow the chat-completions
// contract (or a non-retryable HTTP status came back).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Replay backend has no transcript entry for the request fingerprint.
class ReplayMiss : public Error {
public:
    using Error::Error;
};

// Two distinct canonical requests collided on one fingerprint while recording.
class CollisionError : public Error {
public:
    using Error::Error;
};

// An invalid ChatRequest (empty messages, bad first role, n < 1, ...).
class InvalidRequest : public Error {
public:
    using Error::Error;
};

// Model output could not be turned into the typed record a parser promises.
class ParseFailure : public Error {
public:
    using Error::Error;
};

// A template placeholder was left without a value.
class MissingSlot : public Error {
public:
    using Error::Error;
};

// A slot value was supplied for a placeholder the template does not have.
class UnknownSlot : public Error {
public:
    using Error::Error;
};

// A pipeline stage could not produce its output for a record or at all.
class StageFailure : public Error {
public:
    using Error::Error;
};

// Complexity mix validation failed (negative fraction, sum != 1, bad level).
class BadMix : public Error {
public:
    using Error::Error;
};

// A record violates one of its documented invariants (e.g. chosen == rejected).
class InvariantViolation : public Error {
public:
    using Error::Error;
};

// Filesystem trouble: unreadable input, unwritable output, lock contention.
class IoError : public Error {
public:
    using Error::Error;
};

// Configuration rejected: unknown key, out-of-range value, missing dependency.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Resume attempted against a manifest written under a different config.
class DigestMismatch : public Error {
public:
    using Error::Error;
};

// Manifest file exists but cannot be understood.
class CorruptManifest : public Error {
public:
    using Error::Error;
};

}  // namespace ultraif
