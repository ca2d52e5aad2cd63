"""Memory map shared by the code generator and the simulator.

Code sits at 0. The parameter block holds one word per kernel parameter
(buffer address or scalar value). Shared memory is a fixed window reused
per block. Global buffers are bump-allocated at launch. Per-thread stacks
grow down from the top of memory.
"""

PARAM_BASE = 0x10000
SHARED_BASE = 0x11000
GLOBAL_BASE = 0x20000
