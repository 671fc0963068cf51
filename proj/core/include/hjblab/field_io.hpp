#pragma once

#include <string>

#include "hjblab/hjb_grid.hpp"

namespace hjblab {

/**
 * Field CSV: `# key=value` metadata lines, a header row, then one row per
 * stored node: t_index, x_index_1..d, t, x1..xd, v, u_index.
 * Numbers carry 17 significant digits so a round trip is bit-exact.
 */
void write_field_csv(const ValueField& field, const std::string& path);

/// Throws InputError on malformed rows, missing metadata keys or rows that contradict the metadata.
ValueField read_field_csv(const std::string& path);

}  // namespace hjblab
