#include "pcpipe/errors.hpp"

namespace pcpipe {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kDuplicateField: return "DuplicateField";
    case Errc::kEmptySchema: return "EmptySchema";
    case Errc::kBadShape: return "BadShape";
    case Errc::kBadAlignment: return "BadAlignment";
    case Errc::kColumnOutOfRange: return "ColumnOutOfRange";
    case Errc::kChecksumMismatch: return "ChecksumMismatch";
    case Errc::kCorruptPage: return "CorruptPage";
    case Errc::kSchemaMismatch: return "SchemaMismatch";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kUnsupportedVersion: return "UnsupportedVersion";
    case Errc::kCorruptHeader: return "CorruptHeader";
    case Errc::kRangeOutOfBounds: return "RangeOutOfBounds";
    case Errc::kSchemaConflict: return "SchemaConflict";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kNotPadded: return "NotPadded";
    case Errc::kMalformedHeader: return "MalformedHeader";
    case Errc::kTruncatedPayload: return "TruncatedPayload";
    case Errc::kUnsupportedProperty: return "UnsupportedProperty";
    case Errc::kNoInputFiles: return "NoInputFiles";
    case Errc::kParseFailure: return "ParseFailure";
    case Errc::kShutdown: return "Shutdown";
    case Errc::kMissingField: return "MissingField";
    case Errc::kEmptyCloud: return "EmptyCloud";
    case Errc::kUnknownOp: return "UnknownOp";
    case Errc::kOutOfBounds: return "OutOfBounds";
    case Errc::kWorkerPanic: return "WorkerPanic";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kStoreUnreachable: return "StoreUnreachable";
    case Errc::kMissingMetaIndex: return "MissingMetaIndex";
    case Errc::kIntegrityFailure: return "IntegrityFailure";
    case Errc::kPipelineStopped: return "PipelineStopped";
    case Errc::kInsufficientSamples: return "InsufficientSamples";
    case Errc::kSpaceExhausted: return "SpaceExhausted";
    case Errc::kUsage: return "UsageError";
  }
  return "Unknown";
}

PcError::PcError(Errc code, const std::string& msg)
    : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

void fail(Errc code, const std::string& msg) { throw PcError(code, msg); }

}  // namespace pcpipe
