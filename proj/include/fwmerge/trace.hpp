#pragma once

#include <iosfwd>
#include <string>

#include "fwmerge/fw.hpp"

namespace fwmerge {

// JSON Lines trace: one header object (full config echo, vertex ids,
// flags), then one object per iteration. Schema is documented in the
// repository README.
void write_trace(const FwResult& result, const FwConfig& cfg, const ParamSchema& schema,
                 std::ostream& os);

void write_trace_file(const FwResult& result, const FwConfig& cfg, const ParamSchema& schema,
                      const std::string& path);

std::string to_string(FwVariant v);
std::string to_string(LmoGranularity g);
std::string to_string(LambdaGranularity g);
std::string to_string(SimplexMode m);
std::string to_string(MergeFnKind m);
std::string to_string(StopReason r);

}  // namespace fwmerge
