#pragma once

#include "amd.hpp"
#include "correctness.hpp"
#include "datasets.hpp"
#include "errors.hpp"
#include "infotheory.hpp"
#include "isc.hpp"
#include "mask.hpp"
#include "nn.hpp"
#include "pipeline.hpp"
#include "similarity.hpp"
#include "transport.hpp"
