#pragma once

#include "recmia/attack_shadow_baseline.hpp"
#include "recmia/attack_shadow_free.hpp"
#include "recmia/common.hpp"
#include "recmia/data.hpp"
#include "recmia/evaluation.hpp"
#include "recmia/item_features.hpp"
#include "recmia/oracle_server.hpp"
#include "recmia/partition.hpp"
#include "recmia/pipeline.hpp"
#include "recmia/recommenders.hpp"
#include "recmia/synth.hpp"
