#ifndef TEXTPROC_H
#define TEXTPROC_H

__int64 __fastcall fn_quote(char *a1, char *a2);
__int64 __fastcall fn_trim(char *a1);
__int64 __fastcall fn_count_words(char *a1);

#endif
