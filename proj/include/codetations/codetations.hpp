#pragma once

#include "codetations/model.hpp"
#include "codetations/edit_tracking.hpp"
#include "codetations/similarity.hpp"
#include "codetations/reanchoring.hpp"
#include "codetations/store.hpp"
#include "codetations/layers.hpp"
#include "codetations/config.hpp"
#include "codetations/host_service.hpp"
