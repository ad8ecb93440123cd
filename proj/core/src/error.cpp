#include "pointslice/error.hpp"

namespace ps {

const char* errc_name(Errc c) noexcept {
    switch (c) {
        case Errc::duplicate_coordinate: return "DuplicateCoordinate";
        case Errc::out_of_bounds: return "OutOfBounds";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::oracle_size_exceeded: return "OracleSizeExceeded";
        case Errc::component_overflow: return "ComponentOverflow";
        case Errc::empty_batch: return "EmptyBatch";
        case Errc::invalid_spec: return "InvalidSpec";
        case Errc::channel_mismatch: return "ChannelMismatch";
        case Errc::even_kernel: return "EvenKernel";
        case Errc::geometry_mismatch: return "GeometryMismatch";
        case Errc::missing_paired_active_set: return "MissingPairedActiveSet";
        case Errc::missing_slice_height: return "MissingSliceHeight";
        case Errc::indivisible_batch: return "IndivisibleBatch";
        case Errc::incomplete_weights: return "IncompleteWeights";
        case Errc::config_incompatible: return "ConfigIncompatible";
        case Errc::bad_magic: return "BadMagic";
        case Errc::truncated_file: return "TruncatedFile";
        case Errc::duplicate_tensor_name: return "DuplicateTensorName";
        case Errc::io_error: return "IoError";
        case Errc::config_error: return "ConfigError";
    }
    return "Error";
}

void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

} // namespace ps
