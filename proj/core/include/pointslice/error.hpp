#pragma once

#include <stdexcept>
#include <string>

namespace ps {

// One code per rejection class the library can report. Tests match on the
// code, messages are for humans.
enum class Errc {
    duplicate_coordinate,
    out_of_bounds,
    shape_mismatch,
    oracle_size_exceeded,
    component_overflow,
    empty_batch,
    invalid_spec,
    channel_mismatch,
    even_kernel,
    geometry_mismatch,
    missing_paired_active_set,
    missing_slice_height,
    indivisible_batch,
    incomplete_weights,
    config_incompatible,
    bad_magic,
    truncated_file,
    duplicate_tensor_name,
    io_error,
    config_error,
};

const char* errc_name(Errc c) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& msg);

} // namespace ps
