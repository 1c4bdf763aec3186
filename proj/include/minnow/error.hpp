#pragma once

#include <stdexcept>
#include <string>

namespace minnow {

enum class errc {
  empty_corpus,
  malformed_lexicon,
  insufficient_words,
  insufficient_pool,
  target_missing,
  sequence_too_long,
  empty_mask,
  non_finite_gradient,
  empty_log,
  malformed_syntax_file,
  context_too_long,
  unknown_id,
  bad_config,
  io_error,
  bad_checkpoint,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_corpus: return "EmptyCorpus";
    case errc::malformed_lexicon: return "MalformedLexicon";
    case errc::insufficient_words: return "InsufficientWords";
    case errc::insufficient_pool: return "InsufficientPool";
    case errc::target_missing: return "TargetMissing";
    case errc::sequence_too_long: return "SequenceTooLong";
    case errc::empty_mask: return "EmptyMask";
    case errc::non_finite_gradient: return "NonFiniteGradient";
    case errc::empty_log: return "EmptyLog";
    case errc::malformed_syntax_file: return "MalformedSyntaxFile";
    case errc::context_too_long: return "ContextTooLong";
    case errc::unknown_id: return "UnknownId";
    case errc::bad_config: return "BadConfig";
    case errc::io_error: return "IoError";
    case errc::bad_checkpoint: return "BadCheckpoint";
  }
  return "Error";
}

/// Library-wide error type. `code()` identifies the failure class so callers
/// can match on it without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace minnow
