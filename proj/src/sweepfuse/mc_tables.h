#pragma once

#include <cstdint>

namespace sweepfuse {

// Classic 256-case marching cubes tables (Lorensen-style corner/edge
// numbering: corners 0-3 on the z slab, 4-7 above; edges 0-11).
extern const uint16_t kMcEdgeTable[256];
extern const int8_t kMcTriTable[256][16];

}  // namespace sweepfuse
