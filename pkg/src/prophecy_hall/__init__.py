"""prophecy_hall: a fortune-telling pipeline service.

Spoken question in, prophecy video out. The pipeline chains three stages
(transcribe/translate, few-shot text generation, text-to-video rendering)
behind an HTTP API, with a content-addressed archive of past prophecies
shown to visitors while their own video renders.
"""

__version__ = "0.1.0"
