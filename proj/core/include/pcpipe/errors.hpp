#pragma once

#include <stdexcept>
#include <string>

namespace pcpipe {

enum class Errc {
  // schema / format
  kDuplicateField,
  kEmptySchema,
  kBadShape,
  kBadAlignment,
  kColumnOutOfRange,
  kChecksumMismatch,
  kCorruptPage,
  kSchemaMismatch,
  kIoFailure,
  kEmptyDataset,
  kBadMagic,
  kUnsupportedVersion,
  kCorruptHeader,
  kRangeOutOfBounds,
  // index
  kSchemaConflict,
  kOutOfRange,
  kNotPadded,
  // ingest
  kMalformedHeader,
  kTruncatedPayload,
  kUnsupportedProperty,
  kNoInputFiles,
  kParseFailure,
  // pipeline
  kShutdown,
  kMissingField,
  kEmptyCloud,
  kUnknownOp,
  kOutOfBounds,
  kWorkerPanic,
  // distributed
  kShapeMismatch,
  // streaming
  kStoreUnreachable,
  kMissingMetaIndex,
  kIntegrityFailure,
  // autotune
  kPipelineStopped,
  kInsufficientSamples,
  kSpaceExhausted,
  // cli
  kUsage,
};

const char* errc_name(Errc code);

class PcError : public std::runtime_error {
 public:
  PcError(Errc code, const std::string& msg);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& msg);

}  // namespace pcpipe
