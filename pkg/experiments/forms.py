from django import forms
from django.core.exceptions import ValidationError

from core.audio import is_power_of_two
from experiments.presets import DG_PRESETS

# One form per experiment-config section. Values arrive as strings from the
# INI file; the fields coerce and range-check them.


class ModelSectionForm(forms.Form):
    architecture = forms.ChoiceField(choices=[("cpm", "CP-Mobile"), ("cpr", "CP-ResNet")])
    role = forms.ChoiceField(choices=[("student", "Student"), ("teacher", "Teacher")])
    base_channels = forms.IntegerField(min_value=4)
    expansion_rate = forms.IntegerField(min_value=1)
    channels_multiplier = forms.FloatField(min_value=1.0)
    n_classes = forms.IntegerField(min_value=2)


class DistillSectionForm(forms.Form):
    tau = forms.FloatField()
    teacher_logits = forms.CharField(required=False, strip=True)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # "lambda" is a keyword, so the field cannot be declared as an attribute
        self.fields["lambda"] = forms.FloatField(min_value=0.0, max_value=1.0)

    def clean_tau(self):
        tau = self.cleaned_data["tau"]
        if tau <= 0:
            raise ValidationError("tau must be positive.")
        return tau


class AugmentSectionForm(forms.Form):
    preset = forms.ChoiceField(choices=[(p, p) for p in DG_PRESETS])
    alpha_fms = forms.FloatField(required=False)
    p_fms = forms.FloatField(required=False, min_value=0.0, max_value=1.0)
    p_dir = forms.FloatField(required=False, min_value=0.0, max_value=1.0)
    ir_dir = forms.CharField(required=False, strip=True)
    crop_seconds = forms.FloatField(min_value=0.1)

    def clean_alpha_fms(self):
        alpha = self.cleaned_data["alpha_fms"]
        if alpha is not None and alpha <= 0:
            raise ValidationError("alpha_fms must be positive.")
        return alpha


class TrainSectionForm(forms.Form):
    epochs = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    lr = forms.FloatField(min_value=0.0)
    warmup_epochs = forms.IntegerField(min_value=0)
    seed = forms.IntegerField(min_value=0)
    runs = forms.IntegerField(min_value=1)
    keep_last = forms.IntegerField(min_value=1)

    def clean(self):
        cleaned = super().clean()
        epochs = cleaned.get("epochs")
        if epochs is None:
            return cleaned
        if cleaned.get("keep_last") is not None and cleaned["keep_last"] > epochs:
            self.add_error("keep_last", "keep_last cannot exceed epochs.")
        if cleaned.get("warmup_epochs") is not None and cleaned["warmup_epochs"] >= epochs:
            self.add_error("warmup_epochs", "warmup_epochs must be smaller than epochs.")
        return cleaned


class DataSectionForm(forms.Form):
    manifest = forms.CharField(required=False, strip=True)
    sample_rate = forms.IntegerField(min_value=1000)
    n_fft = forms.IntegerField(min_value=16)
    hop = forms.IntegerField(min_value=1)
    mel_bins = forms.IntegerField(min_value=2)
    f_min = forms.FloatField(min_value=0.0)
    f_max = forms.FloatField(required=False)

    def clean_n_fft(self):
        n_fft = self.cleaned_data["n_fft"]
        if not is_power_of_two(n_fft):
            raise ValidationError("n_fft must be a power of two.")
        return n_fft

    def clean(self):
        cleaned = super().clean()
        rate, f_min = cleaned.get("sample_rate"), cleaned.get("f_min")
        if rate is None or f_min is None:
            return cleaned
        nyquist = rate / 2
        if cleaned.get("f_max") is None:
            cleaned["f_max"] = nyquist
        if not f_min < cleaned["f_max"] <= nyquist:
            self.add_error("f_max", f"need f_min < f_max <= {nyquist:g}.")
        return cleaned


SECTION_FORMS = {
    "model": ModelSectionForm,
    "distill": DistillSectionForm,
    "augment": AugmentSectionForm,
    "train": TrainSectionForm,
    "data": DataSectionForm,
}
