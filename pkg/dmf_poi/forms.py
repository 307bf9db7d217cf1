#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Parameter forms for the command-line front end.

Each command validates its merged parameters (defaults, then the ``--config``
file, then flags) through a Django form. Field ``initial`` values are the
defaults. Django runs standalone here; no project settings module is needed.

See especially:

.. autosummary::
   :nosignatures:

   clean_parameters
   TrainForm
   SweepForm
"""
import logging

import django
from django import forms
from django.conf import settings as django_settings

from . import settings
from .exceptions import UsageError


if not django_settings.configured:
    django_settings.configure(USE_I18N=False, LOGGING_CONFIG=None)
    django.setup()

LOGGER = logging.getLogger(__name__)


class NumberListField(forms.Field):
    """A non-empty list of numbers, given as a list or a comma-separated string."""

    def __init__(self, *, number=float, min_value=None, **kwargs):
        self.number = number
        self.min_value = min_value
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        try:
            values = [self.number(v) for v in value]
        except (TypeError, ValueError):
            raise forms.ValidationError(
                f"Enter a comma-separated list of {self.number.__name__} values.",
                code="invalid",
            )
        return values

    def validate(self, value):
        super().validate(value)
        if self.required and not value:
            raise forms.ValidationError("The list must not be empty.", code="required")
        if self.min_value is not None and any(v < self.min_value for v in value):
            raise forms.ValidationError(
                f"Every value must be >= {self.min_value}.", code="min_value"
            )


class PrepareForm(forms.Form):
    """Parse, filter, normalize and split a check-in file."""

    input = forms.CharField(required=True, help_text="Check-in CSV with a header row.")
    output = forms.CharField(required=True, help_text="Dataset JSON to write.")
    train_fraction = forms.FloatField(
        required=True,
        initial=settings.TRAIN_FRACTION,
        min_value=0,
        max_value=1,
        help_text="Share of ratings kept for training, strictly between 0 and 1.",
    )
    seed = forms.IntegerField(required=True, initial=settings.SEED, min_value=0)
    normalize = forms.ChoiceField(
        required=True,
        choices=[("binary", "binary"), ("minmax", "minmax")],
        initial=settings.NORMALIZE_MODE,
    )
    min_interactions = forms.IntegerField(
        required=True, initial=settings.MIN_INTERACTIONS, min_value=1
    )
    max_interactions = forms.IntegerField(
        required=False, initial=settings.MAX_INTERACTIONS, min_value=1
    )
    skip_malformed = forms.BooleanField(required=False, initial=False)

    def clean(self):
        cleaned = super().clean()
        fraction = cleaned.get("train_fraction")
        if fraction is not None and not 0 < fraction < 1:
            self.add_error("train_fraction", "Must be strictly between 0 and 1.")
        low, high = cleaned.get("min_interactions"), cleaned.get("max_interactions")
        if low is not None and high is not None and high < low:
            self.add_error("max_interactions", "Must be >= min_interactions.")
        return cleaned


class GraphForm(forms.Form):
    """Build the user adjacency graph."""

    input = forms.CharField(required=True, help_text="Check-in CSV the dataset came from.")
    dataset = forms.CharField(required=True, help_text="Dataset JSON, for the user index.")
    output = forms.CharField(required=True, help_text="Graph JSON to write.")
    n = forms.IntegerField(
        required=True,
        initial=settings.MAX_NEIGHBORS,
        min_value=1,
        help_text="Maximum number of direct neighbors per user.",
    )
    f = forms.ChoiceField(
        required=True,
        choices=[("constant", "constant"), ("gaussian", "gaussian")],
        initial=settings.DISTANCE_KERNEL,
        help_text="Distance kernel turning km into edge weights.",
    )
    sigma = forms.FloatField(
        required=False,
        initial=settings.GAUSSIAN_SIGMA_KM,
        help_text="Gaussian kernel bandwidth in km.",
    )
    skip_malformed = forms.BooleanField(required=False, initial=False)


class HyperParamsForm(forms.Form):
    """Model hyper-parameters shared by ``train`` and ``sweep``."""

    model = forms.ChoiceField(
        required=True,
        choices=[(kind, kind) for kind in settings.MODEL_KINDS],
        initial="dmf",
    )
    K = forms.IntegerField(required=True, initial=settings.LATENT_DIM, min_value=1)
    theta = forms.FloatField(required=True, initial=settings.LEARNING_RATE, min_value=0)
    alpha = forms.FloatField(required=True, initial=settings.USER_REG, min_value=0)
    beta = forms.FloatField(required=True, initial=settings.GLOBAL_ITEM_REG, min_value=0)
    gamma = forms.FloatField(required=True, initial=settings.PERSONAL_ITEM_REG, min_value=0)
    D = forms.IntegerField(
        required=True,
        initial=settings.WALK_DISTANCE,
        min_value=0,
        help_text="Maximum random walk distance; 0 disables communication.",
    )
    m = forms.IntegerField(
        required=True,
        initial=settings.NEGATIVES,
        min_value=0,
        help_text="Sampled unobserved ratings per observed rating.",
    )
    T = forms.IntegerField(required=True, initial=settings.EPOCHS, min_value=1)
    seed = forms.IntegerField(required=True, initial=settings.SEED, min_value=0)
    freeze_q = forms.BooleanField(required=False, initial=False)
    walk_scale = forms.ChoiceField(
        required=True,
        choices=[("layer", "layer"), ("normalized", "normalized")],
        initial=settings.WALK_SCALE,
    )
    walk_mode = forms.ChoiceField(
        required=True,
        choices=[("deterministic-layers", "deterministic-layers"), ("sampled", "sampled")],
        initial=settings.WALK_MODE,
    )
    neg_same_city = forms.BooleanField(required=False, initial=False)

    def clean_theta(self):
        theta = self.cleaned_data["theta"]
        if theta <= 0:
            raise forms.ValidationError("The learning rate must be > 0.")
        return theta


class TrainForm(HyperParamsForm):
    """Train one model and write its checkpoint and per-epoch stats."""

    dataset = forms.CharField(required=True)
    graph = forms.CharField(required=False, help_text="Graph JSON; needed when D > 0.")
    output = forms.CharField(required=True, help_text="Output directory.")
    checkpoint_every = forms.IntegerField(
        required=False,
        initial=0,
        min_value=0,
        help_text="Also checkpoint every E epochs; 0 writes only the final checkpoint.",
    )


class EvalForm(forms.Form):
    """Evaluate a checkpoint."""

    dataset = forms.CharField(required=True)
    checkpoint = forms.CharField(required=True)
    output = forms.CharField(required=True, help_text="Output directory.")
    k_values = NumberListField(
        number=int, min_value=1, required=True, initial=list(settings.K_VALUES)
    )
    city_candidates = forms.BooleanField(
        required=False,
        initial=False,
        help_text="Only rank items of the user's own city.",
    )


class SweepForm(HyperParamsForm):
    """Grid of train-and-evaluate runs."""

    dataset = forms.CharField(required=True)
    graph = forms.CharField(required=False)
    output = forms.CharField(required=True, help_text="Output directory.")
    betas = NumberListField(required=True, min_value=0, initial=list(settings.SWEEP_BETAS))
    gammas = NumberListField(required=True, min_value=0, initial=list(settings.SWEEP_GAMMAS))
    Ds = NumberListField(
        number=int, required=True, min_value=0, initial=list(settings.SWEEP_WALK_DISTANCES)
    )
    Ks = NumberListField(
        number=int, required=True, min_value=1, initial=list(settings.SWEEP_LATENT_DIMS)
    )
    k_values = NumberListField(
        number=int, min_value=1, required=True, initial=list(settings.K_VALUES)
    )
    city_candidates = forms.BooleanField(required=False, initial=False)
    workers = forms.IntegerField(
        required=True,
        initial=1,
        min_value=1,
        help_text="Threads running grid cells; results are written in grid order.",
    )


class SynthForm(forms.Form):
    """Generate a synthetic check-in corpus."""

    output = forms.CharField(required=True)
    cities = forms.IntegerField(required=True, initial=settings.SYNTH_CITIES, min_value=1)
    users = forms.IntegerField(required=True, initial=settings.SYNTH_USERS_PER_CITY, min_value=1)
    items = forms.IntegerField(required=True, initial=settings.SYNTH_ITEMS_PER_CITY, min_value=1)
    groups = forms.IntegerField(required=True, initial=settings.SYNTH_GROUPS, min_value=1)
    p_in = forms.FloatField(required=True, initial=settings.SYNTH_P_IN, min_value=0, max_value=1)
    p_out = forms.FloatField(required=True, initial=settings.SYNTH_P_OUT, min_value=0, max_value=1)
    seed = forms.IntegerField(required=True, initial=settings.SEED, min_value=0)

    def clean(self):
        cleaned = super().clean()
        p_in, p_out = cleaned.get("p_in"), cleaned.get("p_out")
        if p_in is not None and p_out is not None and not p_out < p_in:
            self.add_error("p_out", "Must be smaller than p_in.")
        return cleaned


def form_defaults(form_class):
    """``{field: initial}`` for every field of ``form_class``."""
    return {name: field.initial for name, field in form_class.base_fields.items()}


def clean_parameters(form_class, *layers):
    """Merge parameter layers over the form's defaults and validate them.

    Later layers win. ``None`` values never override, so argparse flags left
    unset fall through to the config file and the defaults. Keys the form does
    not know are ignored.

    Raises:
        UsageError: the merged parameters do not validate.
    """
    fields = form_class.base_fields
    merged = form_defaults(form_class)
    for layer in layers:
        for key, value in (layer or {}).items():
            if key not in fields:
                LOGGER.debug(f"Ignoring parameter {key!r} unknown to {form_class.__name__}")
                continue
            if value is not None:
                merged[key] = value

    # unchecked boxes are absent from form data
    data = {k: v for k, v in merged.items() if not (v is False or v is None)}
    form = form_class(data=data)
    if not form.is_valid():
        problems = "; ".join(
            f"{field}: {' '.join(e['message'] for e in errors)}"
            for field, errors in sorted(form.errors.get_json_data().items())
        )
        raise UsageError(f"Invalid parameters for {form_class.__name__}: {problems}")
    return form.cleaned_data
