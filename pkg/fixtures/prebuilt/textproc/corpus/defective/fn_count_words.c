__int64 __fastcall fn_count_words(char *a1)
{
  int v2; // [rsp+4h]
  int v3; // [rsp+8h]
  int v4; // [rsp+Ch]

  v2 = 0;
  v3 = 0;
  v4 = 0;
  while ( a1[v4] )
  {
    if ( a1[v4] == 32 || a1[v4] == 9 )
    {
      v3 = 0;
    }
    else if ( !v3 )
    {
      v3 = 1;
      v2 = v2 + 1;
    }
    v4 = v4 + 1;
  }
  return (unsigned int)v2;
}
